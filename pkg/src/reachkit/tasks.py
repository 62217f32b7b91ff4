"""Goal-reaching task MDPs on the grid with entropy-regularized planning.

Each task discretizes the continuous dynamics onto the grid: cell-center
states, a finite (v, omega) action set, forward-Euler transitions snapped
to the nearest cell, and a disturbance drawn from the box corners plus
center. Three disturbance semantics are supported: "none", "iid_uniform"
(equal weight per atom), and "worst_case", where the environment plays
the value-minimizing atom per (state, action) -- the adversarial setting
under which avoiding the failure set and avoiding its backward reachable
tube become the same problem. Constrained planning applies a large
penalty inside a forbidden mask instead of a hard constraint; goal cells
and forbidden cells are absorbing (self-loop).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import BoundViolationError, ControlAffineModel, box_samples
from .errors import GridMismatchError, InfeasibleTaskError
from .grid import BoolMask, Grid3, ScalarField, index_to_state, nearest_index, wrap_angle

DEFAULT_DT = 0.2
DEFAULT_HORIZON = 60
DEFAULT_TEMPERATURE = 0.05
DEFAULT_PENALTY = 500.0
DEFAULT_GOAL_BONUS = 10.0
DEFAULT_GOAL_RADIUS = 0.3


@dataclass(frozen=True)
class Task:
    """Navigate from a start pose to a circular goal region."""

    id: int
    start: tuple[float, float, float]
    goal: tuple[float, float]
    goal_radius: float = DEFAULT_GOAL_RADIUS

    def __post_init__(self):
        if self.goal_radius <= 0:
            raise ValueError(f"goal_radius must be positive, got {self.goal_radius}")


@dataclass
class TabularMDP:
    """Grid-discretized MDP shared by every task on one model."""

    grid: Grid3
    actions: np.ndarray            # (n_actions, 2) rows (v, omega)
    dt: float = DEFAULT_DT
    horizon: int = DEFAULT_HORIZON
    model: ControlAffineModel = None
    disturbance_mode: str = "iid_uniform"
    goal_bonus: float = DEFAULT_GOAL_BONUS

    def __post_init__(self):
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if self.model is None:
            raise ValueError("TabularMDP requires a dynamics model")
        for a in self.actions:
            if not self.model.action_bounds.contains(a):
                raise BoundViolationError(f"action {tuple(a)} outside model bounds")
        if self.disturbance_mode not in ("none", "iid_uniform", "worst_case"):
            raise ValueError(f"unknown disturbance_mode {self.disturbance_mode!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self._cache = {}

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def disturbance_atoms(self) -> np.ndarray:
        """Equally weighted disturbance support: box corners plus center,
        or just zero when disturbances are off."""
        if self.disturbance_mode == "none":
            return np.zeros((1, 2))
        b = self.model.disturbance_bounds
        corners = np.array([(lx, ly) for lx in (b.lo[0], b.hi[0])
                            for ly in (b.lo[1], b.hi[1])])
        return np.vstack([corners, [b.midpoint]])

    def successor_indices(self) -> np.ndarray:
        """Flat successor cell per (cell, action, disturbance atom)."""
        if "succ" not in self._cache:
            from .dynamics import successor_table
            self._cache["succ"] = successor_table(
                self.model, self.grid, self.actions, self.disturbance_atoms(), self.dt)
        return self._cache["succ"]

    def goal_cells(self, task: Task) -> np.ndarray:
        """Flat boolean array of cells whose center lies in the goal disc."""
        if ("goal", task.id, task.goal, task.goal_radius) not in self._cache:
            xs = self.grid.x.coords[:, None] - task.goal[0]
            ys = self.grid.y.coords[None, :] - task.goal[1]
            in_goal2d = np.hypot(xs, ys) <= task.goal_radius
            bits = np.repeat(in_goal2d[:, :, None], self.grid.theta.count, axis=2)
            self._cache[("goal", task.id, task.goal, task.goal_radius)] = bits.ravel()
        return self._cache[("goal", task.id, task.goal, task.goal_radius)]

    def reward_vector(self, task: Task) -> np.ndarray:
        """Per-cell reward (action independent), flat layout."""
        xs = self.grid.x.coords[:, None] - task.goal[0]
        ys = self.grid.y.coords[None, :] - task.goal[1]
        dist2d = np.hypot(xs, ys)
        r2d = -self.dt * dist2d + self.goal_bonus * (dist2d <= task.goal_radius)
        return np.repeat(r2d[:, :, None], self.grid.theta.count, axis=2).ravel()


def reward(task: Task, s, a=None, dt: float = DEFAULT_DT,
           goal_bonus: float = DEFAULT_GOAL_BONUS) -> float:
    """Shaped step reward: -dt * distance to goal, plus a bonus inside the
    goal disc. Independent of the action."""
    dist = float(np.hypot(s[0] - task.goal[0], s[1] - task.goal[1]))
    return -dt * dist + (goal_bonus if dist <= task.goal_radius else 0.0)


@dataclass
class PolicyTable:
    """Action distribution per cell, rows summing to one."""

    grid: Grid3
    actions: np.ndarray
    probabilities: np.ndarray      # (num_cells, n_actions)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.probabilities.shape != (self.grid.num_cells, len(self.actions)):
            raise GridMismatchError("policy table shape mismatch")
        row_sums = self.probabilities.sum(axis=1)
        if np.any(self.probabilities < -1e-12) or np.abs(row_sums - 1.0).max() > 1e-9:
            raise ValueError("policy rows must be distributions")


@dataclass
class VisitationField:
    """Unnormalized expected visit counts over the horizon."""

    density: ScalarField

    @property
    def grid(self) -> Grid3:
        return self.density.grid

    def total_mass(self) -> float:
        return float(self.density.values.sum())


@dataclass(frozen=True)
class TrajectoryRecord:
    task_id: int
    step: int
    t: float
    state: tuple[float, float, float]
    action: tuple[float, float]


def default_action_set(model: ControlAffineModel, per_dim: int = 3) -> np.ndarray:
    """Evenly spaced (v, omega) pairs covering the action box."""
    return box_samples(model.action_bounds, per_dim)


@dataclass(frozen=True)
class MDPParams:
    """Discretization knobs shared by every task MDP in a run."""

    dt: float = DEFAULT_DT
    horizon: int = DEFAULT_HORIZON
    actions_per_dim: int = 3
    disturbance_mode: str = "iid_uniform"
    goal_bonus: float = DEFAULT_GOAL_BONUS

    def build(self, model: ControlAffineModel, grid: Grid3) -> TabularMDP:
        return TabularMDP(
            grid=grid,
            actions=default_action_set(model, self.actions_per_dim),
            dt=self.dt,
            horizon=self.horizon,
            model=model,
            disturbance_mode=self.disturbance_mode,
            goal_bonus=self.goal_bonus,
        )


def _absorbing_successors(mdp: TabularMDP, absorbing_flat: np.ndarray) -> np.ndarray:
    succ = mdp.successor_indices().copy()
    cells = np.nonzero(absorbing_flat)[0]
    succ[cells, :, :] = cells[:, None, None]
    return succ


def _logsumexp_rows(q: np.ndarray, tau: float) -> np.ndarray:
    """tau * log sum_a exp(q / tau), stable for tiny tau."""
    m = q.max(axis=1)
    return m + tau * np.log(np.exp((q - m[:, None]) / tau).sum(axis=1))


def soft_cvi(mdp: TabularMDP, task: Task, constraint_mask: BoolMask,
             penalty: float = DEFAULT_PENALTY,
             temperature: float = DEFAULT_TEMPERATURE) -> dict:
    """Finite-horizon soft value iteration with a penalized constraint.

    The stage reward is the task reward minus `penalty` inside the
    constraint mask; goal and constrained cells self-loop. The backup is

        Q_h(s, a) = r(s) + E_d[V_{h+1}(s')]
        V_h(s)    = tau * log sum_a exp(Q_h(s, a) / tau)

    with V_horizon = 0, where E_d is the mean over disturbance atoms for
    "iid_uniform" and the minimum for "worst_case". Returns the h=0 policy
    table, V_0, and (for worst_case) the adversary's atom choice per
    (cell, action), which rollouts and exact visitation replay.
    """
    if constraint_mask.grid != mdp.grid:
        raise GridMismatchError("constraint mask must live on the MDP grid")
    if penalty <= 0 or temperature <= 0:
        raise ValueError("penalty and temperature must be positive")

    mask_flat = constraint_mask.bits.ravel()
    start_cell = nearest_index(mdp.grid, task.start)
    start_flat = np.ravel_multi_index(start_cell, mdp.grid.shape)
    if mask_flat[start_flat]:
        raise InfeasibleTaskError(
            f"task {task.id}: start cell is inside the constraint mask", [task.id])

    goal_flat = mdp.goal_cells(task)
    absorbing = goal_flat | mask_flat
    succ = _absorbing_successors(mdp, absorbing)
    n_atoms = succ.shape[2]
    worst = mdp.disturbance_mode == "worst_case"

    r = mdp.reward_vector(task) - penalty * mask_flat
    v_next = np.zeros(mdp.grid.num_cells)
    q = None
    d_choice = None
    for _ in range(mdp.horizon):
        v_succ = v_next[succ]
        if worst:
            d_choice = v_succ.argmin(axis=2)
            ev = np.take_along_axis(v_succ, d_choice[:, :, None], axis=2)[:, :, 0]
        elif n_atoms > 1:
            ev = v_succ.mean(axis=2)
        else:
            ev = v_succ[:, :, 0]
        q = r[:, None] + ev
        v_next = _logsumexp_rows(q, temperature)

    probs = np.exp((q - v_next[:, None]) / temperature)
    probs /= probs.sum(axis=1, keepdims=True)
    policy = PolicyTable(mdp.grid, mdp.actions, probs)
    value = ScalarField(mdp.grid, v_next.reshape(mdp.grid.shape))
    out = {"policy": policy, "value": value}
    if worst:
        out["disturbance"] = d_choice.astype(np.int32)
    return out


def _check_disturbance_table(mdp: TabularMDP, disturbance_table) -> np.ndarray | None:
    if mdp.disturbance_mode == "worst_case":
        if disturbance_table is None:
            raise ValueError(
                "worst_case MDPs need the adversary table returned by soft_cvi")
        return np.asarray(disturbance_table)
    return None


def rollout(mdp: TabularMDP, policy: PolicyTable, task: Task, rng_seed: int,
            disturbance_table: np.ndarray | None = None) -> list[TrajectoryRecord]:
    """Sample one trajectory from the policy on snapped grid states.

    Stops at the horizon or on entering a goal cell; deterministic given
    the seed. Worst-case MDPs replay the adversary table from soft_cvi,
    iid MDPs draw a uniform atom per step.
    """
    rng = np.random.default_rng(rng_seed)
    succ = mdp.successor_indices()
    goal_flat = mdp.goal_cells(task)
    n_atoms = succ.shape[2]
    d_table = _check_disturbance_table(mdp, disturbance_table)

    cell = np.ravel_multi_index(nearest_index(mdp.grid, task.start), mdp.grid.shape)
    records = []
    for step in range(mdp.horizon):
        a_idx = int(rng.choice(mdp.n_actions, p=policy.probabilities[cell]))
        if d_table is not None:
            d_idx = int(d_table[cell, a_idx])
        elif mdp.disturbance_mode == "iid_uniform":
            d_idx = int(rng.integers(n_atoms))
        else:
            d_idx = 0
        state = index_to_state(mdp.grid, *np.unravel_index(cell, mdp.grid.shape))
        records.append(TrajectoryRecord(
            task_id=task.id, step=step, t=step * mdp.dt,
            state=state, action=tuple(mdp.actions[a_idx])))
        if goal_flat[cell]:
            break
        cell = int(succ[cell, a_idx, d_idx])
    return records


def visitation_exact(mdp: TabularMDP, policy: PolicyTable, task: Task,
                     constraint_mask: BoolMask | None = None,
                     disturbance_table: np.ndarray | None = None) -> VisitationField:
    """Exact state-visitation density of a stationary policy.

    Pushes unit probability mass from the snapped start through the policy
    and transition kernel, accumulating the distributions at steps
    0 .. horizon-1, so the total mass equals the horizon. Goal cells (and
    constrained cells, when a mask is given) self-loop, matching soft_cvi.
    """
    goal_flat = mdp.goal_cells(task)
    absorbing = goal_flat.copy()
    if constraint_mask is not None:
        if constraint_mask.grid != mdp.grid:
            raise GridMismatchError("constraint mask must live on the MDP grid")
        absorbing |= constraint_mask.bits.ravel()
    succ = _absorbing_successors(mdp, absorbing)
    n_cells = mdp.grid.num_cells
    n_atoms = succ.shape[2]
    d_table = _check_disturbance_table(mdp, disturbance_table)
    if d_table is not None:
        kernel = np.take_along_axis(succ, d_table[:, :, None], axis=2)[:, :, 0]
        n_atoms = 1
    else:
        kernel = succ.reshape(n_cells, -1)

    p = np.zeros(n_cells)
    p[np.ravel_multi_index(nearest_index(mdp.grid, task.start), mdp.grid.shape)] = 1.0
    density = np.zeros(n_cells)
    for _ in range(mdp.horizon):
        density += p
        w = (p[:, None] * policy.probabilities) / n_atoms
        if n_atoms > 1:
            w = np.repeat(w, n_atoms, axis=1)
        p = np.bincount(kernel.ravel(), weights=w.ravel(), minlength=n_cells)
    return VisitationField(ScalarField(mdp.grid, density.reshape(mdp.grid.shape)))


def aggregate_density(fields: list[VisitationField]) -> VisitationField:
    """Pointwise sum of visitation fields on a shared grid."""
    if not fields:
        raise ValueError("need at least one visitation field")
    grid = fields[0].grid
    total = np.zeros(grid.shape)
    for f in fields:
        if f.grid != grid:
            raise GridMismatchError("visitation fields live on different grids")
        total += f.density.values
    return VisitationField(ScalarField(grid, total))


def expected_return(mdp: TabularMDP, policy: PolicyTable, task: Task,
                    constraint_mask: BoolMask | None = None,
                    disturbance_table: np.ndarray | None = None) -> float:
    """Exact expected raw-reward return (no penalty term) of a policy."""
    dens = visitation_exact(mdp, policy, task, constraint_mask, disturbance_table)
    return float(dens.density.values.ravel() @ mdp.reward_vector(task))


CROSSING_ARCS = (np.pi + 0.5, np.pi - 0.5, np.pi + 1.0, np.pi - 1.0)


def sample_ring_tasks(grid: Grid3, count: int, ring_radius: float = 3.0,
                      seed: int = 0, goal_radius: float = DEFAULT_GOAL_RADIUS,
                      jitter: float = 0.1, goal_arcs=CROSSING_ARCS) -> list[Task]:
    """Start/goal pairs on a ring around the origin.

    Starts sit at evenly spaced angles (plus a small seeded jitter); goal k
    sits on the same ring at start angle + goal_arcs[k % len], also
    jittered. The default arcs send paths across the ring near (but not
    dead-center through) the obstacle; smaller arcs give same-side hops
    that keep clear of it. Start headings face the goal.
    """
    rng = np.random.default_rng(seed)
    tasks = []
    for k in range(count):
        ang = -np.pi + 2 * np.pi * k / count + jitter * rng.uniform(-1, 1)
        goal_ang = ang + goal_arcs[k % len(goal_arcs)] + jitter * rng.uniform(-1, 1)
        start_xy = (ring_radius * np.cos(ang), ring_radius * np.sin(ang))
        goal_xy = (ring_radius * np.cos(goal_ang), ring_radius * np.sin(goal_ang))
        heading = wrap_angle(np.arctan2(goal_xy[1] - start_xy[1],
                                        goal_xy[0] - start_xy[0]))
        tasks.append(Task(
            id=k,
            start=(float(start_xy[0]), float(start_xy[1]), float(heading)),
            goal=(float(goal_xy[0]), float(goal_xy[1])),
            goal_radius=goal_radius,
        ))
    return tasks


# ---------------------------------------------------------------------------
# Persistence: tasks as a JSON array, trajectories as JSON lines.
# ---------------------------------------------------------------------------

def tasks_to_json(tasks: list[Task]) -> str:
    items = [{"id": t.id, "start": list(t.start), "goal": list(t.goal),
              "goal_radius": t.goal_radius} for t in tasks]
    return json.dumps(items, indent=2)


def tasks_from_json(text: str) -> list[Task]:
    return [Task(id=item["id"], start=tuple(item["start"]),
                 goal=tuple(item["goal"]), goal_radius=item["goal_radius"])
            for item in json.loads(text)]


def trajectory_lines(records: list[TrajectoryRecord]) -> list[str]:
    lines = []
    for r in records:
        lines.append(json.dumps({
            "task": r.task_id, "step": r.step, "t": r.t,
            "x": r.state[0], "y": r.state[1], "theta": r.state[2],
            "v": r.action[0], "omega": r.action[1],
        }))
    return lines

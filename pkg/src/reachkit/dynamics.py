"""Control-affine Dubins-like dynamics with box-bounded inputs.

The vehicle state is s = (x, y, theta) and

    dx/dt     = (v_nominal + v) cos(theta) + d_x
    dy/dt     = (v_nominal + v) sin(theta) + d_y
    dtheta/dt = omega

with action a = (v, omega) and disturbance d = (d_x, d_y), i.e.
f = f0 + G_u a + G_d d where f0 = (v_nominal cos(theta), v_nominal
sin(theta), 0), G_u = [[cos(theta), 0], [sin(theta), 0], [0, 1]] and
G_d = [[1, 0], [0, 1], [0, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundViolationError
from .grid import wrap_angle


@dataclass(frozen=True)
class BoxBounds:
    """Per-component interval bounds on an action or disturbance vector."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError("box requires lo <= hi componentwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def midpoint(self) -> tuple[float, ...]:
        return tuple(0.5 * (l + h) for l, h in zip(self.lo, self.hi))

    @property
    def abs_max(self) -> tuple[float, ...]:
        return tuple(max(abs(l), abs(h)) for l, h in zip(self.lo, self.hi))

    def contains(self, vec, tol: float = 1e-12) -> bool:
        return all(l - tol <= v <= h + tol
                   for v, l, h in zip(vec, self.lo, self.hi))

    @classmethod
    def symmetric(cls, *magnitudes: float) -> "BoxBounds":
        return cls(tuple(-m for m in magnitudes), tuple(magnitudes))


@dataclass(frozen=True)
class ControlAffineModel:
    """Dubins-like model: nominal forward speed plus bounded (v, omega) and
    bounded planar disturbance."""

    v_nominal: float
    action_bounds: BoxBounds        # (v, omega)
    disturbance_bounds: BoxBounds   # (d_x, d_y)
    name: str = "custom"

    def __post_init__(self):
        if self.action_bounds.dim != 2 or self.disturbance_bounds.dim != 2:
            raise ValueError("action and disturbance bounds must be 2-D")


PRESETS = {
    "agile": ControlAffineModel(
        v_nominal=0.6,
        action_bounds=BoxBounds.symmetric(1.5, 1.5),
        disturbance_bounds=BoxBounds.symmetric(0.6, 0.6),
        name="agile",
    ),
    "non_agile": ControlAffineModel(
        v_nominal=0.6,
        action_bounds=BoxBounds.symmetric(0.7, 0.7),
        disturbance_bounds=BoxBounds.symmetric(0.6, 0.6),
        name="non_agile",
    ),
    # Stand-in for a system that can always out-run the disturbance: reverse
    # thrust 5.0 dwarfs v_nominal 0.6 plus disturbance 0.6.
    "ultra_agile": ControlAffineModel(
        v_nominal=0.6,
        action_bounds=BoxBounds.symmetric(5.0, 5.0),
        disturbance_bounds=BoxBounds.symmetric(0.6, 0.6),
        name="ultra_agile",
    ),
}


def get_preset(name: str) -> ControlAffineModel:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")


def drift(model: ControlAffineModel, s) -> np.ndarray:
    """Open-loop term f0(s)."""
    theta = float(s[2])
    return np.array([model.v_nominal * np.cos(theta),
                     model.v_nominal * np.sin(theta),
                     0.0])


def control_jacobian(s) -> np.ndarray:
    theta = float(s[2])
    return np.array([[np.cos(theta), 0.0],
                     [np.sin(theta), 0.0],
                     [0.0, 1.0]])


def disturbance_jacobian(s) -> np.ndarray:
    return np.array([[1.0, 0.0],
                     [0.0, 1.0],
                     [0.0, 0.0]])


def flow(model: ControlAffineModel, s, a, d) -> np.ndarray:
    """State derivative f0(s) + G_u(s) a + G_d(s) d."""
    if not model.action_bounds.contains(a):
        raise BoundViolationError(f"action {tuple(a)} outside {model.action_bounds}")
    if not model.disturbance_bounds.contains(d):
        raise BoundViolationError(f"disturbance {tuple(d)} outside {model.disturbance_bounds}")
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    return drift(model, s) + control_jacobian(s) @ a + disturbance_jacobian(s) @ d


def _extremize(coeff: float, lo: float, hi: float, maximize: bool) -> tuple[float, float]:
    """Extremum of coeff * u over u in [lo, hi] and its attaining u.

    A zero coefficient ties every u; the midpoint is returned so outputs
    stay deterministic.
    """
    if coeff == 0.0:
        return 0.0, 0.5 * (lo + hi)
    at_lo, at_hi = coeff * lo, coeff * hi
    if maximize:
        return (at_hi, hi) if at_hi >= at_lo else (at_lo, lo)
    return (at_lo, lo) if at_lo <= at_hi else (at_hi, hi)


def hamiltonian(model: ControlAffineModel, s, p) -> dict:
    """max over actions, min over disturbances of p . f(s, a, d).

    The payoff is affine in each input component, so the extremum per
    component sits at a box edge: contribution max(c*lo, c*hi) for control
    columns and min(c*lo, c*hi) for disturbance columns, where c is the
    costate projected onto that column.
    """
    p = np.asarray(p, dtype=float)
    gu = control_jacobian(s)
    gd = disturbance_jacobian(s)
    value = float(p @ drift(model, s))
    a_star = []
    for col in range(2):
        c = float(p @ gu[:, col])
        term, arg = _extremize(c, model.action_bounds.lo[col],
                               model.action_bounds.hi[col], maximize=True)
        value += term
        a_star.append(arg)
    d_star = []
    for col in range(2):
        c = float(p @ gd[:, col])
        term, arg = _extremize(c, model.disturbance_bounds.lo[col],
                               model.disturbance_bounds.hi[col], maximize=False)
        value += term
        d_star.append(arg)
    return {"value": value, "a_star": tuple(a_star), "d_star": tuple(d_star)}


def dissipation_bounds(model: ControlAffineModel, s) -> tuple[float, float, float]:
    """Componentwise bound on |dH/dp_i|: |f0_i| plus the absolute row sums
    of G_u and G_d weighted by the largest admissible input magnitudes."""
    theta = float(s[2])
    a_max = model.action_bounds.abs_max
    d_max = model.disturbance_bounds.abs_max
    c, si = abs(np.cos(theta)), abs(np.sin(theta))
    alpha_x = model.v_nominal * c + a_max[0] * c + d_max[0]
    alpha_y = model.v_nominal * si + a_max[0] * si + d_max[1]
    alpha_t = a_max[1]
    return float(alpha_x), float(alpha_y), float(alpha_t)


def euler_step(model: ControlAffineModel, s, a, d, dt: float) -> np.ndarray:
    """Forward Euler step of length dt with theta wrapped into [-pi, pi)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    nxt = np.asarray(s, dtype=float) + dt * flow(model, s, a, d)
    nxt[2] = wrap_angle(nxt[2])
    return nxt


# ---------------------------------------------------------------------------
# Vectorized forms used by the grid solver. These mirror hamiltonian() and
# dissipation_bounds() on arrays of costates indexed by theta.
# ---------------------------------------------------------------------------

def hamiltonian_values(model: ControlAffineModel, cos_t, sin_t, px, py, pt) -> np.ndarray:
    """Hamiltonian over arrays; cos_t/sin_t broadcast against the costates."""
    ab, db = model.action_bounds, model.disturbance_bounds
    heading = px * cos_t + py * sin_t
    value = model.v_nominal * heading
    value = value + np.maximum(heading * ab.lo[0], heading * ab.hi[0])
    value = value + np.maximum(pt * ab.lo[1], pt * ab.hi[1])
    value = value + np.minimum(px * db.lo[0], px * db.hi[0])
    value = value + np.minimum(py * db.lo[1], py * db.hi[1])
    return value


def dissipation_profiles(model: ControlAffineModel, theta: np.ndarray):
    """(alpha_x, alpha_y, alpha_theta) evaluated along a theta array."""
    a_max = model.action_bounds.abs_max
    d_max = model.disturbance_bounds.abs_max
    c, s = np.abs(np.cos(theta)), np.abs(np.sin(theta))
    alpha_x = (model.v_nominal + a_max[0]) * c + d_max[0]
    alpha_y = (model.v_nominal + a_max[0]) * s + d_max[1]
    alpha_t = np.full_like(theta, a_max[1])
    return alpha_x, alpha_y, alpha_t


def successor_table(model: ControlAffineModel, grid, actions, disturbances,
                    dt: float) -> np.ndarray:
    """Deterministic per-(cell, action, disturbance) successors.

    Steps every cell center with forward Euler, clamps (x, y) to the grid
    bounds, wraps theta, and snaps to the nearest cell. Returns flat cell
    indices of shape (num_cells, n_actions, n_disturbances), int32.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    disturbances = np.atleast_2d(np.asarray(disturbances, dtype=float))
    for a in actions:
        if not model.action_bounds.contains(a):
            raise BoundViolationError(f"action {tuple(a)} outside bounds")
    for d in disturbances:
        if not model.disturbance_bounds.contains(d):
            raise BoundViolationError(f"disturbance {tuple(d)} outside bounds")

    xs = grid.x.coords
    ys = grid.y.coords
    ts = grid.theta.coords
    # cell-center coordinate blocks, shape (nx, ny, nt)
    cx = xs[:, None, None]
    cy = ys[None, :, None]
    cos_t = np.cos(ts)[None, None, :]
    sin_t = np.sin(ts)[None, None, :]
    ct = ts[None, None, :]

    n_cells = grid.num_cells
    n_a, n_d = len(actions), len(disturbances)
    table = np.empty((n_cells, n_a, n_d), dtype=np.int32)
    ny, nt = grid.y.count, grid.theta.count
    for ia, (v, omega) in enumerate(actions):
        speed = model.v_nominal + v
        for idx, (dx_, dy_) in enumerate(disturbances):
            nx_pos = cx + dt * (speed * cos_t + dx_)
            ny_pos = cy + dt * (speed * sin_t + dy_)
            nt_pos = ct + dt * omega
            i = np.clip(np.rint((nx_pos - grid.x.lo) / grid.x.spacing),
                        0, grid.x.count - 1).astype(np.int64)
            j = np.clip(np.rint((ny_pos - grid.y.lo) / grid.y.spacing),
                        0, grid.y.count - 1).astype(np.int64)
            k = np.rint((wrap_angle(nt_pos) - grid.theta.lo)
                        / grid.theta.spacing).astype(np.int64) % nt
            table[:, ia, idx] = ((i * ny + j) * nt + k).ravel()
    return table


def box_samples(bounds: BoxBounds, per_dim: int) -> np.ndarray:
    """Evenly spaced sample vectors in a box: the Cartesian product of
    `per_dim` points per component (corners included)."""
    if per_dim < 2:
        raise ValueError("need at least 2 samples per dimension")
    axes = [np.linspace(l, h, per_dim) for l, h in zip(bounds.lo, bounds.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)

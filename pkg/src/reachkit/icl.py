"""Multi-task inverse constraint learning at tabular scale.

The bilevel loop alternates (inner) constrained soft planning per task
against the current constraint estimate with (outer) a closed-form
density-ratio classifier between the learner and expert visitation.
The classifier is the per-cell population optimum of the logistic
objective, mapped through a bounded monotone transform

    c(s) = (p(s) - q(s)) / (p(s) + q(s) + eps)

of the learner/expert probability pair (p, q), which equals
2*sigmoid(log(p/q)) - 1 at eps = 0 and stays inside [-1, 1]. Cells the
constraint marks above the threshold form the inferred unsafe set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, InfeasibleTaskError
from .grid import BoolMask, Grid3, ScalarField, nearest_index, set_metrics, sublevel_set
from .reachability import BRTResult, brt_of_set
from .tasks import (MDPParams, TabularMDP, Task, VisitationField,
                    aggregate_density, soft_cvi, visitation_exact)

DEFAULT_THRESHOLD = 0.6
DEFAULT_EPSILON = 1e-9
DEFAULT_SUPPORT_FLOOR = 1e-6
DEFAULT_EPOCHS = 5


@dataclass
class ConstraintField:
    """Learned constraint with values in [-1, 1] and a level threshold."""

    values: ScalarField
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        v = self.values.values
        if v.min() < -1.0 - 1e-12 or v.max() > 1.0 + 1e-12:
            raise ValueError("constraint values must lie in [-1, 1]")

    @property
    def grid(self) -> Grid3:
        return self.values.grid

    def unsafe_mask(self) -> BoolMask:
        """Cells with value strictly above the threshold."""
        return BoolMask(self.grid, self.values.values > self.threshold)

    @classmethod
    def all_safe(cls, grid: Grid3, threshold: float = DEFAULT_THRESHOLD) -> "ConstraintField":
        return cls(ScalarField.full(grid, 0.0), threshold)


@dataclass
class ICLConfig:
    tasks: list[Task] = field(default_factory=list)
    epochs: int = DEFAULT_EPOCHS
    epsilon: float = DEFAULT_EPSILON
    support_floor: float = DEFAULT_SUPPORT_FLOOR
    penalty: float = 500.0
    temperature: float = 0.05
    threshold: float = DEFAULT_THRESHOLD
    mdp: MDPParams = field(default_factory=MDPParams)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class ICLHistory:
    """Per-epoch artifacts of one learning run."""

    learner_densities: list[VisitationField] = field(default_factory=list)
    constraints: list[ConstraintField] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    expert_density: VisitationField | None = None

    @property
    def epochs_done(self) -> int:
        return len(self.constraints)

    def final_constraint(self) -> ConstraintField:
        if not self.constraints:
            raise ValueError("no epochs recorded")
        return self.constraints[-1]

    def learner_mixture(self) -> VisitationField:
        """Uniform average of the stored per-epoch learner densities."""
        if not self.learner_densities:
            raise ValueError("no epochs recorded")
        agg = aggregate_density(self.learner_densities)
        scaled = agg.density.values / len(self.learner_densities)
        return VisitationField(ScalarField(agg.grid, scaled))


def _normalize(values: np.ndarray) -> np.ndarray:
    total = values.sum()
    return values / total if total > 0 else np.zeros_like(values)


def optimal_classifier(rho_learner: VisitationField, rho_expert: VisitationField,
                       eps: float = DEFAULT_EPSILON,
                       threshold: float = DEFAULT_THRESHOLD,
                       support_floor: float = DEFAULT_SUPPORT_FLOOR) -> ConstraintField:
    """Closed-form learner-vs-expert classifier on normalized densities.

    Cells that neither density visits above the support floor are left at
    0 (unknown defaults to safe): density ratios between two exponential
    tails carry no information, and feeding them to the constraint sends
    later learner epochs detouring around scattered noise cells.
    """
    if rho_learner.grid != rho_expert.grid:
        raise GridMismatchError("densities live on different grids")
    if eps <= 0:
        raise ValueError("eps must be positive")
    p = _normalize(rho_learner.density.values)
    q = _normalize(rho_expert.density.values)
    values = (p - q) / (p + q + eps)
    values[(p < support_floor) & (q < support_floor)] = 0.0
    return ConstraintField(ScalarField(rho_learner.grid, values), threshold)


def _solve_tasks(mdp: TabularMDP, tasks: list[Task], mask: BoolMask,
                 penalty: float, temperature: float, threads: int = 1) -> list[dict]:
    """Constrained soft planning for every task, optionally in parallel.

    Results come back in task order, so the output does not depend on the
    thread count.
    """
    def solve(task):
        sol = soft_cvi(mdp, task, mask, penalty, temperature)
        sol["density"] = visitation_exact(mdp, sol["policy"], task, mask,
                                          sol.get("disturbance"))
        return sol

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(solve, tasks))
    return [solve(t) for t in tasks]


def icl_round(history: ICLHistory, config: ICLConfig,
              expert_density: VisitationField, mdp: TabularMDP,
              epoch: int, threads: int = 1) -> dict:
    """One outer iteration: constrained learners, then the classifier.

    The inner solves run against the unsafe mask of the previous epoch's
    constraint (an all-safe constraint at epoch 1). The classifier input
    mixes the learner aggregates of epochs 1..epoch uniformly.
    """
    if epoch < 1:
        raise ValueError("epoch counts from 1")
    if history.constraints:
        mask = history.constraints[-1].unsafe_mask()
    else:
        mask = ConstraintField.all_safe(mdp.grid, config.threshold).unsafe_mask()

    try:
        solutions = _solve_tasks(mdp, config.tasks, mask, config.penalty,
                                 config.temperature, threads)
    except InfeasibleTaskError as err:
        raise InfeasibleTaskError(
            f"epoch {epoch}: inner solve infeasible: {err}", err.task_ids) from err

    learner_density = aggregate_density([s["density"] for s in solutions])
    mixture = aggregate_density(history.learner_densities + [learner_density])
    mixture = VisitationField(ScalarField(
        mixture.grid, mixture.density.values / epoch))
    constraint = optimal_classifier(mixture, expert_density, config.epsilon,
                                    config.threshold, config.support_floor)
    return {"constraint": constraint, "learner_density": learner_density}


def solve_experts(config: ICLConfig, mdp: TabularMDP, brt_mask: BoolMask,
                  threads: int = 1) -> list[dict]:
    """Soft-optimal expert per task.

    Experts are solved against the unsafe tube of the true failure set:
    a safe demonstrator never enters the region where failure has become
    inevitable, which is what distinguishes its demonstrations from mere
    failure-set avoidance.
    """
    return _solve_tasks(mdp, config.tasks, brt_mask, config.penalty,
                        config.temperature, threads)


def run_mt_icl(config: ICLConfig, model, grid: Grid3, failure_mask: BoolMask,
               brt: BRTResult | None = None,
               expert_density: VisitationField | None = None,
               threads: int = 1) -> ICLHistory:
    """Full learning run: experts, then config.epochs bilevel rounds.

    Rejects any task whose snapped start lies inside the model's unsafe
    tube (computed from the failure mask when not supplied). A
    pre-aggregated expert density, e.g. from ingested demonstrations,
    skips the in-system expert solves.
    """
    if failure_mask.grid != grid:
        raise GridMismatchError("failure mask must live on the run grid")
    if brt is None:
        brt = brt_of_set(model, grid, failure_mask)
    mdp = config.mdp.build(model, grid)

    bad = [t.id for t in config.tasks
           if brt.unsafe.bits[nearest_index(grid, t.start)]]
    if bad:
        raise InfeasibleTaskError(
            f"task starts inside the unsafe tube: {bad}", bad)

    history = ICLHistory()
    if expert_density is None:
        experts = solve_experts(config, mdp, brt.unsafe, threads)
        expert_density = aggregate_density([s["density"] for s in experts])
    elif expert_density.grid != grid:
        raise GridMismatchError("expert density must live on the run grid")
    history.expert_density = expert_density

    for epoch in range(1, config.epochs + 1):
        result = icl_round(history, config, expert_density, mdp, epoch, threads)
        history.learner_densities.append(result["learner_density"])
        history.constraints.append(result["constraint"])
        history.metrics.append(_epoch_metrics(
            result, expert_density, brt.unsafe, failure_mask))
    return history


def _epoch_metrics(result: dict, expert_density: VisitationField,
                   brt_mask: BoolMask, failure_mask: BoolMask) -> dict:
    inferred = result["constraint"].unsafe_mask()
    learner = result["learner_density"]
    return {
        "unsafe_cells": inferred.count(),
        "vs_brt": set_metrics(inferred, brt_mask),
        "vs_failure": set_metrics(inferred, failure_mask),
        "learner_mass_in_brt": float(learner.density.values[brt_mask.bits].sum()),
        "expert_mass_in_brt": float(expert_density.density.values[brt_mask.bits].sum()),
    }


def density_from_records(grid: Grid3, records: list[dict]) -> VisitationField:
    """Empirical visitation from demonstration records by cell snapping.

    Each record needs x, y, theta keys; counts are raw visits.
    """
    values = np.zeros(grid.shape)
    for rec in records:
        values[nearest_index(grid, (rec["x"], rec["y"], rec["theta"]))] += 1.0
    return VisitationField(ScalarField(grid, values))

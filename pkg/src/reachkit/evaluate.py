"""Evaluation of inferred constraints: classification metrics against
tube and failure-set labels, nesting checks across control authorities,
cross-dynamics constraint transfer, and min-aggregation of constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InfeasibleTaskError
from .grid import BoolMask, Grid3, ScalarField, set_metrics
from .icl import ConstraintField
from .reachability import BRTResult, brt_of_set
from .tasks import MDPParams, Task, soft_cvi, visitation_exact

SUPPORT_DENSITY_FLOOR = 1e-6


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    iou: float
    support: dict
    restriction: str

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1, "iou": self.iou,
            "support": self.support, "restriction": self.restriction,
        }


def classification_report(predicted: BoolMask, labels: BoolMask,
                          restriction_mask: BoolMask | None = None) -> ClassificationReport:
    """Confusion-matrix metrics with "unsafe" as the positive class.

    Precision, recall, and f1 fall back to 0 when their denominators are
    empty (degenerate masks happen in early epochs).
    """
    if predicted.grid != labels.grid:
        raise GridMismatchError("predicted and label masks live on different grids")
    if restriction_mask is not None:
        if restriction_mask.grid != predicted.grid:
            raise GridMismatchError("restriction mask lives on a different grid")
        keep = restriction_mask.bits
        restriction = "visited_support"
    else:
        keep = np.ones(predicted.grid.shape, dtype=bool)
        restriction = "full_grid"

    pred = predicted.bits[keep]
    lab = labels.bits[keep]
    tp = int((pred & lab).sum())
    fp = int((pred & ~lab).sum())
    fn = int((~pred & lab).sum())
    tn = int((~pred & ~lab).sum())
    total = tp + fp + fn + tn

    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassificationReport(
        accuracy=(tp + tn) / total if total else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        iou=tp / (tp + fp + fn) if tp + fp + fn else 0.0,
        support={"cells": total, "positives": tp + fn, "predicted_positives": tp + fp},
        restriction=restriction,
    )


def support_mask(grid: Grid3, densities, floor: float = SUPPORT_DENSITY_FLOOR) -> BoolMask:
    """Cells the given visitation fields jointly reach above the floor.

    Each field is normalized to unit mass first, matching the probability
    scale the classifier works on.
    """
    total = np.zeros(grid.shape)
    for d in densities:
        if d.grid != grid:
            raise GridMismatchError("density lives on a different grid")
        mass = d.density.values.sum()
        if mass > 0:
            total += d.density.values / mass
    return BoolMask(grid, total >= floor)


def nesting_report(brts: list[BRTResult]) -> list[dict]:
    """Containment statistics for each adjacent pair of an authority-ordered
    list of tube results (most agile first)."""
    pairs = []
    for smaller, larger in zip(brts, brts[1:]):
        if smaller.unsafe.grid != larger.unsafe.grid:
            raise GridMismatchError("tube masks live on different grids")
        m = set_metrics(smaller.unsafe, larger.unsafe)
        n_small, n_large = smaller.unsafe.count(), larger.unsafe.count()
        pairs.append({
            "smaller_cells": n_small,
            "larger_cells": n_large,
            "frac_smaller_in_larger": m["frac_a_in_b"],
            "volume_ratio": n_large / n_small if n_small else float("inf"),
        })
    return pairs


@dataclass
class TransferReport:
    source: str
    target: str
    per_task: list[dict]
    return_with_source_constraint: float      # sum over solved tasks
    return_with_own_brt: float
    failure_mass_with_source_constraint: float
    failure_mass_with_own_brt: float
    skipped_tasks: list[int]
    tube_of_source_constraint_cells: int
    own_brt_cells: int
    frac_own_brt_in_transferred_tube: float

    def as_dict(self) -> dict:
        return {
            "source": self.source, "target": self.target,
            "per_task": self.per_task,
            "return_with_source_constraint": self.return_with_source_constraint,
            "return_with_own_brt": self.return_with_own_brt,
            "failure_mass_with_source_constraint": self.failure_mass_with_source_constraint,
            "failure_mass_with_own_brt": self.failure_mass_with_own_brt,
            "skipped_tasks": self.skipped_tasks,
            "tube_of_source_constraint_cells": self.tube_of_source_constraint_cells,
            "own_brt_cells": self.own_brt_cells,
            "frac_own_brt_in_transferred_tube": self.frac_own_brt_in_transferred_tube,
        }


def transfer_experiment(model_a, constraint_mask_b: BoolMask, tasks: list[Task],
                        grid: Grid3, failure_mask: BoolMask,
                        brt_a: BRTResult | None = None,
                        mdp_params: MDPParams | None = None,
                        penalty: float = 500.0, temperature: float = 0.05,
                        source_name: str = "b", target_name: str = "a") -> TransferReport:
    """Policy optimization for model a under a constraint learned on model b.

    Solves each task twice (under the transferred mask and under model a's
    own tube), compares exact returns and failure-set visitation, and
    closes the transferred mask under model a's dynamics to check it
    contains the native tube. Tasks infeasible under either mask are
    skipped and reported; the experiment fails only if every task is.
    """
    if constraint_mask_b.grid != grid or failure_mask.grid != grid:
        raise GridMismatchError("masks must live on the experiment grid")
    if brt_a is None:
        brt_a = brt_of_set(model_a, grid, failure_mask)
    mdp = (mdp_params or MDPParams()).build(model_a, grid)

    per_task = []
    skipped = []
    tot_rb = tot_ra = tot_fb = tot_fa = 0.0
    for task in tasks:
        try:
            sol_b = soft_cvi(mdp, task, constraint_mask_b, penalty, temperature)
            sol_a = soft_cvi(mdp, task, brt_a.unsafe, penalty, temperature)
        except InfeasibleTaskError:
            skipped.append(task.id)
            continue
        dens_b = visitation_exact(mdp, sol_b["policy"], task, constraint_mask_b,
                                  sol_b.get("disturbance"))
        dens_a = visitation_exact(mdp, sol_a["policy"], task, brt_a.unsafe,
                                  sol_a.get("disturbance"))
        r_vec = mdp.reward_vector(task)
        rb = float(dens_b.density.values.ravel() @ r_vec)
        ra = float(dens_a.density.values.ravel() @ r_vec)
        fb = float(dens_b.density.values[failure_mask.bits].sum())
        fa = float(dens_a.density.values[failure_mask.bits].sum())
        per_task.append({"task": task.id, "return_source_constraint": rb,
                         "return_own_brt": ra, "failure_mass_source": fb,
                         "failure_mass_own": fa})
        tot_rb += rb
        tot_ra += ra
        tot_fb += fb
        tot_fa += fa
    if not per_task:
        raise InfeasibleTaskError(
            "transfer experiment infeasible for every task "
            "(the transferred constraint blocks all starts)", skipped)

    closure = brt_of_set(model_a, grid, constraint_mask_b)
    containment = set_metrics(brt_a.unsafe, closure.unsafe)["frac_a_in_b"]
    return TransferReport(
        source=source_name,
        target=target_name,
        per_task=per_task,
        return_with_source_constraint=tot_rb,
        return_with_own_brt=tot_ra,
        failure_mass_with_source_constraint=tot_fb,
        failure_mass_with_own_brt=tot_fa,
        skipped_tasks=skipped,
        tube_of_source_constraint_cells=closure.unsafe.count(),
        own_brt_cells=brt_a.unsafe.count(),
        frac_own_brt_in_transferred_tube=containment,
    )


def intersect_constraints(constraints: list[ConstraintField]) -> ConstraintField:
    """Pointwise minimum, so the induced unsafe set is the intersection of
    the inputs' unsafe sets."""
    if not constraints:
        raise ValueError("need at least one constraint")
    first = constraints[0]
    for c in constraints[1:]:
        if c.grid != first.grid:
            raise GridMismatchError("constraints live on different grids")
        if c.threshold != first.threshold:
            raise ValueError("constraints carry different thresholds")
    values = np.minimum.reduce([c.values.values for c in constraints])
    return ConstraintField(ScalarField(first.grid, values), first.threshold)

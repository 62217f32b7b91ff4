"""reachkit: backward reachable tubes, safe demonstrations, and
inverse constraint learning on a Dubins-like system."""

__version__ = "0.1.0"

from .dynamics import BoxBounds, ControlAffineModel, get_preset
from .grid import AxisSpec, BoolMask, Grid3, ScalarField, make_grid
from .icl import ConstraintField, ICLConfig, ICLHistory, run_mt_icl
from .reachability import BRTResult, Obstacle, brute_force_brt, failure_sdf, solve_brt
from .tasks import MDPParams, TabularMDP, Task, sample_ring_tasks

__all__ = [
    "AxisSpec", "BoolMask", "BoxBounds", "BRTResult", "ConstraintField",
    "ControlAffineModel", "Grid3", "ICLConfig", "ICLHistory", "MDPParams",
    "Obstacle", "ScalarField", "TabularMDP", "Task", "brute_force_brt",
    "failure_sdf", "get_preset", "make_grid", "run_mt_icl",
    "sample_ring_tasks", "solve_brt", "__version__",
]

"""Backward reachable tubes via a Lax-Friedrichs level-set solve.

The value function starts at the failure surface h and is relaxed by

    V <- min(V + dt * H_LF(V), h)

until it stops changing, where H_LF is the Lax-Friedrichs numerical
Hamiltonian: the exact max-min Hamiltonian evaluated at the central
gradient plus dissipation alpha_i * (D+_i V - D-_i V) / 2 per axis. The
dissipation coefficients bound |dH/dp_i|, which together with the CFL
bound dt * sum_i(alpha_i / dx_i) <= 1 makes every update monotone in the
neighboring values, so the iterates decrease pointwise from h to the
converged value whose strict sub-zero level set is the unsafe tube.

A discrete avoid-game oracle (brute_force_brt) provides an independent
check: it iterates "every action has a disturbance that leads into the
current unsafe set" to a fixed point on snapped grid states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dynamics import (ControlAffineModel, box_samples, dissipation_profiles,
                       hamiltonian_values, successor_table)
from .errors import CFLViolationError, GridMismatchError
from .grid import BoolMask, Grid3, ScalarField, sublevel_set

DEFAULT_TOLERANCE = 1e-4
DEFAULT_CFL = 0.8
DEFAULT_MAX_ITERS = 4000


@dataclass(frozen=True)
class Obstacle:
    """Circular failure region in the (x, y) plane."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass
class BRTResult:
    value: ScalarField
    unsafe: BoolMask
    iterations: int
    residual: float       # max value change of the final sweep per unit time
    converged: bool


def failure_sdf(obstacle: Obstacle, grid: Grid3) -> ScalarField:
    """Signed distance to the obstacle boundary, negative inside,
    independent of heading."""
    xs = grid.x.coords[:, None] - obstacle.center[0]
    ys = grid.y.coords[None, :] - obstacle.center[1]
    dist2d = np.hypot(xs, ys) - obstacle.radius
    values = np.repeat(dist2d[:, :, None], grid.theta.count, axis=2)
    return ScalarField(grid, values)


def _one_sided_diffs(values: np.ndarray, axis: int, spacing: float, periodic: bool):
    """Forward/backward difference quotients; non-periodic edges reuse the
    single interior difference on both sides."""
    if periodic:
        fwd = (np.roll(values, -1, axis=axis) - values) / spacing
        bwd = (values - np.roll(values, 1, axis=axis)) / spacing
        return fwd, bwd
    d = np.diff(values, axis=axis) / spacing
    first = np.take(d, [0], axis=axis)
    last = np.take(d, [-1], axis=axis)
    fwd = np.concatenate([d, last], axis=axis)
    bwd = np.concatenate([first, d], axis=axis)
    return fwd, bwd


def _cfl_rate(model: ControlAffineModel, grid: Grid3) -> np.ndarray:
    """sum_i alpha_i / dx_i per theta slice (the x/y profiles depend only
    on theta)."""
    ax, ay, at = dissipation_profiles(model, grid.theta.coords)
    return ax / grid.x.spacing + ay / grid.y.spacing + at / grid.theta.spacing


def cfl_time_step(model: ControlAffineModel, grid: Grid3, cfl: float = DEFAULT_CFL) -> float:
    """Largest dt with dt * sum_i(alpha_i / dx_i) <= cfl at every cell."""
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    return cfl / float(_cfl_rate(model, grid).max())


def vi_step(model: ControlAffineModel, grid: Grid3, V: ScalarField,
            h: ScalarField, dt: float) -> tuple[ScalarField, float]:
    """One Lax-Friedrichs sweep of the variational inequality.

    Returns the updated field min(V + dt * H_LF, h) and the max-norm
    change. Raises CFLViolationError when dt exceeds the stability bound.
    """
    if V.grid != grid or h.grid != grid:
        raise GridMismatchError("V and h must live on the solver grid")
    rate = _cfl_rate(model, grid)
    if dt * rate.max() > 1.0 + 1e-12:
        raise CFLViolationError(
            f"dt={dt} violates CFL: dt * max rate = {dt * rate.max():.4f} > 1")

    v = V.values
    fx, bx = _one_sided_diffs(v, 0, grid.x.spacing, periodic=False)
    fy, by = _one_sided_diffs(v, 1, grid.y.spacing, periodic=False)
    ft, bt = _one_sided_diffs(v, 2, grid.theta.spacing, periodic=True)

    ts = grid.theta.coords
    cos_t = np.cos(ts)[None, None, :]
    sin_t = np.sin(ts)[None, None, :]
    ham = hamiltonian_values(model, cos_t, sin_t,
                             0.5 * (fx + bx), 0.5 * (fy + by), 0.5 * (ft + bt))
    ax, ay, at = dissipation_profiles(model, ts)
    lf = ham + 0.5 * (ax[None, None, :] * (fx - bx)
                      + ay[None, None, :] * (fy - by)
                      + at[None, None, :] * (ft - bt))
    updated = np.minimum(v + dt * lf, h.values)
    if not np.all(np.isfinite(updated)):
        raise FloatingPointError("non-finite values after solver step")
    delta = float(np.abs(updated - v).max())
    return ScalarField(grid, updated), delta


def solve_brt(model: ControlAffineModel, grid: Grid3, h: ScalarField,
              tolerance: float = DEFAULT_TOLERANCE, cfl: float = DEFAULT_CFL,
              max_iters: int = DEFAULT_MAX_ITERS) -> BRTResult:
    """Iterate vi_step until the value field stops changing.

    Convergence requires the per-sweep change to fall below tolerance * dt;
    hitting max_iters first yields converged=False rather than an error.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    dt = cfl_time_step(model, grid, cfl)
    V = ScalarField(grid, h.values.copy())
    residual = float("inf")
    iterations = 0
    converged = False
    for iterations in range(1, max_iters + 1):
        V, delta = vi_step(model, grid, V, h, dt)
        residual = delta / dt
        if residual < tolerance:
            converged = True
            break
    return BRTResult(
        value=V,
        unsafe=sublevel_set(V, 0.0),
        iterations=iterations,
        residual=residual,
        converged=converged,
    )


def mask_to_sdf(target: BoolMask) -> ScalarField:
    """Signed-distance-like initializer for an arbitrary avoid set.

    Distances are Euclidean in (x, y) per theta slice (targets from
    transfer experiments depend on heading), negative inside the target.
    """
    grid = target.grid
    sampling = (grid.x.spacing, grid.y.spacing)
    values = np.empty(grid.shape)
    for k in range(grid.theta.count):
        inside = target.bits[:, :, k]
        dist_out = ndimage.distance_transform_edt(~inside, sampling=sampling)
        dist_in = ndimage.distance_transform_edt(inside, sampling=sampling)
        values[:, :, k] = dist_out - dist_in
    return ScalarField(grid, values)


def brt_of_set(model: ControlAffineModel, grid: Grid3, target: BoolMask,
               tolerance: float = DEFAULT_TOLERANCE, cfl: float = DEFAULT_CFL,
               max_iters: int = DEFAULT_MAX_ITERS) -> BRTResult:
    """BRT of an arbitrary target set under the given model (the operator
    that maps any avoid set to its tube)."""
    if target.grid != grid:
        raise GridMismatchError("target mask must live on the solver grid")
    if not target.bits.any():
        span = np.hypot(grid.x.hi - grid.x.lo, grid.y.hi - grid.y.lo)
        return BRTResult(
            value=ScalarField.full(grid, span),
            unsafe=BoolMask.empty(grid),
            iterations=0,
            residual=0.0,
            converged=True,
        )
    return solve_brt(model, grid, mask_to_sdf(target), tolerance, cfl, max_iters)


def brute_force_brt(model: ControlAffineModel, grid: Grid3, failure: BoolMask,
                    n_actions: int = 3, n_disturbances: int = 3,
                    dt: float = 0.2, max_iters: int = 10000) -> BoolMask:
    """Fixed point of the discrete avoid game on snapped grid states.

    A cell joins the unsafe set once every sampled action admits a sampled
    disturbance whose Euler successor is already unsafe. Monotone on a
    finite lattice, so termination is guaranteed; intended for coarse grids
    where it serves as an independent oracle for the PDE solve.
    """
    if failure.grid != grid:
        raise GridMismatchError("failure mask must live on the oracle grid")
    actions = box_samples(model.action_bounds, n_actions)
    disturbances = box_samples(model.disturbance_bounds, n_disturbances)
    succ = successor_table(model, grid, actions, disturbances, dt)

    unsafe = failure.bits.ravel().copy()
    for _ in range(max_iters):
        forced = unsafe[succ].any(axis=2).all(axis=1)
        new_unsafe = unsafe | forced
        if np.array_equal(new_unsafe, unsafe):
            break
        unsafe = new_unsafe
    return BoolMask(grid, unsafe.reshape(grid.shape))

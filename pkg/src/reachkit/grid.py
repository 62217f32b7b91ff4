"""Axis-aligned 3-D grid over (x, y, theta) with a periodic heading axis.

Scalar fields and boolean masks share one row-major (x, y, theta) layout,
so theta is the fastest-varying axis and heading stencils are contiguous.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, OutOfDomainError

TWO_PI = 2.0 * np.pi

VFLD_MAGIC = b"VFLD\x00\x00\x00\x01"


def wrap_angle(theta):
    """Wrap an angle (scalar or array) into [-pi, pi)."""
    return np.mod(np.asarray(theta) + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True)
class AxisSpec:
    """One grid axis: [lo, hi] with `count` cell centers.

    Periodic axes alias `hi` with `lo`, so the spacing is (hi - lo)/count;
    non-periodic axes place centers at both endpoints, spacing
    (hi - lo)/(count - 1).
    """

    lo: float
    hi: float
    count: int
    periodic: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"axis requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.count < 3:
            raise ValueError(f"axis requires count >= 3, got {self.count}")

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.hi - self.lo) / self.count
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def coords(self) -> np.ndarray:
        return self.lo + self.spacing * np.arange(self.count)


@dataclass(frozen=True)
class Grid3:
    """Product grid over x (m), y (m), and periodic theta (rad)."""

    x: AxisSpec
    y: AxisSpec
    theta: AxisSpec

    def __post_init__(self):
        if not self.theta.periodic:
            raise ValueError("theta axis must be periodic")
        if abs(self.theta.lo + np.pi) > 1e-12 or abs(self.theta.hi - np.pi) > 1e-12:
            raise ValueError("theta axis must span exactly [-pi, pi)")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x.count, self.y.count, self.theta.count)

    @property
    def num_cells(self) -> int:
        return self.x.count * self.y.count * self.theta.count

    @property
    def axes(self) -> tuple[AxisSpec, AxisSpec, AxisSpec]:
        return (self.x, self.y, self.theta)

    def __eq__(self, other):
        if not isinstance(other, Grid3):
            return NotImplemented
        return self.axes == other.axes


def make_grid(nx: int = 61, ny: int = 61, ntheta: int = 31,
              x_lo: float = -4.0, x_hi: float = 4.0,
              y_lo: float = -4.0, y_hi: float = 4.0) -> Grid3:
    """Default desk-scale grid: [-4, 4]^2 m with theta in [-pi, pi)."""
    return Grid3(
        x=AxisSpec(x_lo, x_hi, nx),
        y=AxisSpec(y_lo, y_hi, ny),
        theta=AxisSpec(-np.pi, np.pi, ntheta, periodic=True),
    )


@dataclass
class ScalarField:
    """Real values at every cell center, shape (nx, ny, ntheta), C-order."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}")

    @classmethod
    def full(cls, grid: Grid3, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, value, dtype=np.float64))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class BoolMask:
    """Boolean membership bits aligned with the ScalarField layout."""

    grid: Grid3
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)
        if self.bits.shape != self.grid.shape:
            raise GridMismatchError(
                f"mask shape {self.bits.shape} != grid shape {self.grid.shape}")

    @classmethod
    def empty(cls, grid: Grid3) -> "BoolMask":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid: Grid3) -> "BoolMask":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    def count(self) -> int:
        return int(self.bits.sum())

    def copy(self) -> "BoolMask":
        return BoolMask(self.grid, self.bits.copy())


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("operands live on different grids")


def index_to_state(grid: Grid3, i: int, j: int, k: int) -> tuple[float, float, float]:
    """Cell-center coordinates of cell (i, j, k); theta lands in [-pi, pi)."""
    nx, ny, nt = grid.shape
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nt):
        raise IndexError(f"cell index ({i}, {j}, {k}) outside grid {grid.shape}")
    return (
        grid.x.lo + i * grid.x.spacing,
        grid.y.lo + j * grid.y.spacing,
        grid.theta.lo + k * grid.theta.spacing,
    )


def nearest_index(grid: Grid3, s) -> tuple[int, int, int]:
    """Snap a state to the nearest cell; (x, y) clamped, theta wrapped."""
    x, y, theta = float(s[0]), float(s[1]), float(s[2])
    i = int(np.clip(round((x - grid.x.lo) / grid.x.spacing), 0, grid.x.count - 1))
    j = int(np.clip(round((y - grid.y.lo) / grid.y.spacing), 0, grid.y.count - 1))
    k = int(round((wrap_angle(theta) - grid.theta.lo) / grid.theta.spacing)) % grid.theta.count
    return i, j, k


def interpolate(field: ScalarField, s) -> float:
    """Trilinear interpolation at state s; theta wraps across the seam.

    Raises OutOfDomainError when (x, y) falls outside the grid bounds.
    """
    grid = field.grid
    x, y, theta = float(s[0]), float(s[1]), float(s[2])
    if not (grid.x.lo <= x <= grid.x.hi) or not (grid.y.lo <= y <= grid.y.hi):
        raise OutOfDomainError(f"({x}, {y}) outside grid bounds")

    fx = (x - grid.x.lo) / grid.x.spacing
    fy = (y - grid.y.lo) / grid.y.spacing
    ft = (wrap_angle(theta) - grid.theta.lo) / grid.theta.spacing

    i0 = min(int(fx), grid.x.count - 2)
    j0 = min(int(fy), grid.y.count - 2)
    k0 = int(ft) % grid.theta.count
    wx, wy, wt = fx - i0, fy - j0, ft - int(ft)
    i1, j1 = i0 + 1, j0 + 1
    k1 = (k0 + 1) % grid.theta.count

    v = field.values
    c00 = v[i0, j0, k0] * (1 - wt) + v[i0, j0, k1] * wt
    c01 = v[i0, j1, k0] * (1 - wt) + v[i0, j1, k1] * wt
    c10 = v[i1, j0, k0] * (1 - wt) + v[i1, j0, k1] * wt
    c11 = v[i1, j1, k0] * (1 - wt) + v[i1, j1, k1] * wt
    c0 = c00 * (1 - wy) + c01 * wy
    c1 = c10 * (1 - wy) + c11 * wy
    return float(c0 * (1 - wx) + c1 * wx)


def gradient_central(field: ScalarField, i: int, j: int, k: int) -> tuple[float, float, float]:
    """Central-difference gradient at cell (i, j, k).

    Non-periodic boundaries fall back to one-sided differences; the theta
    axis wraps.
    """
    grid = field.grid
    nx, ny, nt = grid.shape
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nt):
        raise IndexError(f"cell index ({i}, {j}, {k}) outside grid {grid.shape}")
    v = field.values

    if 0 < i < nx - 1:
        px = (v[i + 1, j, k] - v[i - 1, j, k]) / (2 * grid.x.spacing)
    elif i == 0:
        px = (v[1, j, k] - v[0, j, k]) / grid.x.spacing
    else:
        px = (v[nx - 1, j, k] - v[nx - 2, j, k]) / grid.x.spacing

    if 0 < j < ny - 1:
        py = (v[i, j + 1, k] - v[i, j - 1, k]) / (2 * grid.y.spacing)
    elif j == 0:
        py = (v[i, 1, k] - v[i, 0, k]) / grid.y.spacing
    else:
        py = (v[i, ny - 1, k] - v[i, ny - 2, k]) / grid.y.spacing

    pt = (v[i, j, (k + 1) % nt] - v[i, j, (k - 1) % nt]) / (2 * grid.theta.spacing)
    return float(px), float(py), float(pt)


def sublevel_set(field: ScalarField, threshold: float) -> BoolMask:
    """Cells where value < threshold (strict)."""
    return BoolMask(field.grid, field.values < threshold)


def set_metrics(a: BoolMask, b: BoolMask) -> dict:
    """Overlap statistics between two masks on the same grid.

    iou is 1.0 when both masks are empty; each containment fraction is 1.0
    when its reference mask is empty.
    """
    _check_same_grid(a, b)
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    na, nb = a.count(), b.count()
    return {
        "iou": inter / union if union else 1.0,
        "frac_a_in_b": inter / na if na else 1.0,
        "frac_b_in_a": inter / nb if nb else 1.0,
    }


# ---------------------------------------------------------------------------
# VFLD on-disk format
# ---------------------------------------------------------------------------
# 8-byte magic "VFLD\0\0\0\1", then per axis: lo and hi as little-endian
# float64, count as little-endian uint64, periodic as one byte. Payload is
# row-major (x, y, theta): float64 per cell for fields, one byte per cell
# for masks.

_AXIS_STRUCT = struct.Struct("<ddQB")


def _pack_header(grid: Grid3) -> bytes:
    parts = [VFLD_MAGIC]
    for ax in grid.axes:
        parts.append(_AXIS_STRUCT.pack(ax.lo, ax.hi, ax.count, 1 if ax.periodic else 0))
    return b"".join(parts)


def _unpack_header(buf: bytes) -> tuple[Grid3, int]:
    if buf[:8] != VFLD_MAGIC:
        raise ValueError("not a VFLD file (bad magic)")
    offset = 8
    axes = []
    for _ in range(3):
        lo, hi, count, periodic = _AXIS_STRUCT.unpack_from(buf, offset)
        offset += _AXIS_STRUCT.size
        axes.append(AxisSpec(lo, hi, int(count), bool(periodic)))
    return Grid3(*axes), offset


def write_field(path, field: ScalarField) -> None:
    payload = field.values.astype("<f8").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(_pack_header(field.grid))
        f.write(payload)


def read_field(path) -> ScalarField:
    with open(path, "rb") as f:
        buf = f.read()
    grid, offset = _unpack_header(buf)
    expected = grid.num_cells * 8
    if len(buf) - offset != expected:
        raise ValueError(f"payload size {len(buf) - offset} != {expected} (float64 field)")
    values = np.frombuffer(buf, dtype="<f8", offset=offset).reshape(grid.shape)
    return ScalarField(grid, values.copy())


def write_mask(path, mask: BoolMask) -> None:
    payload = mask.bits.astype(np.uint8).tobytes(order="C")
    with open(path, "wb") as f:
        f.write(_pack_header(mask.grid))
        f.write(payload)


def read_mask(path) -> BoolMask:
    with open(path, "rb") as f:
        buf = f.read()
    grid, offset = _unpack_header(buf)
    expected = grid.num_cells
    if len(buf) - offset != expected:
        raise ValueError(f"payload size {len(buf) - offset} != {expected} (one byte per cell)")
    bits = np.frombuffer(buf, dtype=np.uint8, offset=offset).reshape(grid.shape)
    return BoolMask(grid, bits.astype(bool))

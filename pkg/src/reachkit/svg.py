"""Minimal SVG rendering of heading slices: domain box, failure circle,
and level-set contours extracted with marching squares. Deterministic
output (pure function of the inputs), no raster dependencies.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid3, ScalarField

# Segment endpoints per marching-squares case, as (edge, edge) pairs.
# Edges: 0 bottom, 1 right, 2 top, 3 left of the cell square; corners are
# indexed (i, j), (i+1, j), (i+1, j+1), (i, j+1). Ambiguous cases 5 and 10
# use the default (non-connected) resolution.
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    5: [(3, 2), (0, 1)], 6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)],
    9: [(0, 2)], 10: [(0, 3), (1, 2)], 11: [(1, 2)],
    12: [(1, 3)], 13: [(0, 1)], 14: [(0, 3)],
}


def _edge_point(edge, i, j, xs, ys, z, level):
    if edge == 0:
        a, b = z[i, j], z[i + 1, j]
        t = (level - a) / (b - a)
        return xs[i] + t * (xs[i + 1] - xs[i]), ys[j]
    if edge == 1:
        a, b = z[i + 1, j], z[i + 1, j + 1]
        t = (level - a) / (b - a)
        return xs[i + 1], ys[j] + t * (ys[j + 1] - ys[j])
    if edge == 2:
        a, b = z[i, j + 1], z[i + 1, j + 1]
        t = (level - a) / (b - a)
        return xs[i] + t * (xs[i + 1] - xs[i]), ys[j + 1]
    a, b = z[i, j], z[i, j + 1]
    t = (level - a) / (b - a)
    return xs[i], ys[j] + t * (ys[j + 1] - ys[j])


def contour_segments(z: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                     level: float) -> list:
    """Marching-squares line segments of the level set of z on the (xs, ys)
    lattice, as ((x1, y1), (x2, y2)) world-coordinate pairs."""
    segments = []
    below = z < level
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            case = (int(below[i, j]) | int(below[i + 1, j]) << 1
                    | int(below[i + 1, j + 1]) << 2 | int(below[i, j + 1]) << 3)
            if case == 0 or case == 15:
                continue
            for e1, e2 in _CASES[case]:
                p1 = _edge_point(e1, i, j, xs, ys, z, level)
                p2 = _edge_point(e2, i, j, xs, ys, z, level)
                segments.append((p1, p2))
    return segments


def _fmt(v: float) -> str:
    return f"{v:.4f}"


class SliceSVG:
    """One x-y slice drawing at a fixed heading."""

    def __init__(self, grid: Grid3, size: int = 480, margin: int = 30):
        self.grid = grid
        self.size = size
        self.margin = margin
        span_x = grid.x.hi - grid.x.lo
        span_y = grid.y.hi - grid.y.lo
        self.scale = (size - 2 * margin) / max(span_x, span_y)
        self._parts = []
        self._legend = []

    def _to_px(self, x: float, y: float) -> tuple[float, float]:
        px = self.margin + (x - self.grid.x.lo) * self.scale
        py = self.size - self.margin - (y - self.grid.y.lo) * self.scale
        return px, py

    def add_circle(self, center, radius, color: str, label: str) -> None:
        cx, cy = self._to_px(center[0], center[1])
        self._parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius * self.scale)}" '
            f'fill="{color}" fill-opacity="0.35" stroke="{color}" stroke-width="1.5"/>')
        self._legend.append((color, label))

    def add_contour(self, field: ScalarField, theta: float, level: float,
                    color: str, label: str) -> None:
        k = int(round((theta - self.grid.theta.lo) / self.grid.theta.spacing))
        k %= self.grid.theta.count
        z = field.values[:, :, k]
        segs = contour_segments(z, self.grid.x.coords, self.grid.y.coords, level)
        lines = []
        for (x1, y1), (x2, y2) in segs:
            p1 = self._to_px(x1, y1)
            p2 = self._to_px(x2, y2)
            lines.append(f'M{_fmt(p1[0])} {_fmt(p1[1])}L{_fmt(p2[0])} {_fmt(p2[1])}')
        self._parts.append(
            f'<path d="{"".join(lines)}" stroke="{color}" stroke-width="2" fill="none"/>')
        self._legend.append((color, label))

    def render(self, title: str) -> str:
        x0, y0 = self._to_px(self.grid.x.lo, self.grid.y.hi)
        x1, y1 = self._to_px(self.grid.x.hi, self.grid.y.lo)
        body = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" '
            f'height="{self.size}" viewBox="0 0 {self.size} {self.size}">',
            f'<rect x="0" y="0" width="{self.size}" height="{self.size}" fill="white"/>',
            f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
            f'height="{_fmt(y1 - y0)}" fill="none" stroke="#444" stroke-width="1"/>',
            f'<text x="{self.margin}" y="{self.margin - 10}" font-size="13" '
            f'font-family="sans-serif">{title}</text>',
        ]
        body.extend(self._parts)
        for n, (color, label) in enumerate(self._legend):
            y = self.margin + 14 * n
            body.append(
                f'<line x1="{self.size - 150}" y1="{y}" x2="{self.size - 130}" '
                f'y2="{y}" stroke="{color}" stroke-width="3"/>'
                f'<text x="{self.size - 124}" y="{y + 4}" font-size="11" '
                f'font-family="sans-serif">{label}</text>')
        body.append('</svg>')
        return "\n".join(body)


def render_slice(path, grid: Grid3, theta: float, obstacle=None,
                 contours=()) -> None:
    """Write one heading-slice overlay.

    contours: iterable of (field, level, color, label) drawn in order.
    """
    svg = SliceSVG(grid)
    if obstacle is not None:
        svg.add_circle(obstacle.center, obstacle.radius, "#d62728", "failure set")
    for field, level, color, label in contours:
        svg.add_contour(field, theta, level, color, label)
    content = svg.render(f"slice at heading {theta:+.3f} rad")
    with open(path, "w") as f:
        f.write(content)

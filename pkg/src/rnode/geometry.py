"""Planar geometry used for zone derivation and violation predicates.

All points are ``(x, y)`` pixel coordinates. Polygon orientation is measured
with the ordinary shoelace formula in those coordinates, so "counter-clockwise"
means positive signed area (which looks clockwise on screen, where y grows
downwards).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyWindow

Point = tuple[float, float]
Segment = tuple[Point, Point]

DEFAULT_RESAMPLE_POINTS = 64


def cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


# Relative error bound on the float cross product (a little above 3u + 16u^2).
_ORIENT_EPS = 3.3306690738754716e-16 * 1.01


def orientation(a: Point, b: Point, c: Point) -> int:
    """Sign of ``cross(a, b, c)``, exact for any finite float input.

    The float result is trusted when it clears the rounding-error bound.
    Otherwise the sign is recomputed with rationals.
    """
    left = (b[0] - a[0]) * (c[1] - a[1])
    right = (b[1] - a[1]) * (c[0] - a[0])
    v = left - right
    if math.isfinite(v) and abs(v) > _ORIENT_EPS * (abs(left) + abs(right)):
        return 1 if v > 0 else -1
    ax, ay, bx, by, cx, cy = map(Fraction, (a[0], a[1], b[0], b[1], c[0], c[1]))
    e = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    return (e > 0) - (e < 0)


def signed_area(vertices: Sequence[Point]) -> float:
    n = len(vertices)
    s = 0.0
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return s / 2.0


def segments_properly_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    o1 = orientation(p1, p2, q1)
    o2 = orientation(p1, p2, q2)
    o3 = orientation(q1, q2, p1)
    o4 = orientation(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


def _segments_touch(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Closed-segment intersection test (touching counts)."""
    o1 = orientation(p1, p2, q1)
    o2 = orientation(p1, p2, q2)
    o3 = orientation(q1, q2, p1)
    o4 = orientation(q1, q2, p2)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True

    def on_seg(a: Point, b: Point, c: Point) -> bool:
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def is_simple(vertices: Sequence[Point]) -> bool:
    n = len(vertices)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_touch(a1, a2, vertices[j], vertices[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with positive signed area."""

    vertices: tuple[Point, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise DegenerateInput(f"polygon needs >= 3 vertices, got {len(self.vertices)}")
        if signed_area(self.vertices) <= 0:
            raise DegenerateInput("polygon must have positive signed area")

    @classmethod
    def from_rect(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def centroid(self) -> Point:
        a = 0.0
        cx = cy = 0.0
        n = len(self.vertices)
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            c = x1 * y2 - x2 * y1
            a += c
            cx += (x1 + x2) * c
            cy += (y1 + y2) * c
        a /= 2.0
        return (cx / (6 * a), cy / (6 * a))

    def edges(self) -> list[Segment]:
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def contains(self, p: Point) -> bool:
        return point_in_polygon(p, self.vertices)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


def point_in_polygon(p: Point, vertices: Sequence[Point]) -> bool:
    """Even-odd rule."""
    x, y = p
    inside = False
    n = len(vertices)
    j = n - 1
    for i in range(n):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def convex_hull(points: Iterable[Point]) -> Polygon:
    """Andrew's monotone chain; collinear boundary points are dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise DegenerateInput(f"need >= 3 distinct points, got {len(pts)}")

    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and orientation(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and orientation(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("all points are collinear")
    return Polygon(tuple(hull))


def bbox_corners(bbox: Sequence[float]) -> list[Point]:
    x, y, w, h = bbox
    return [(x, y), (x + w, y), (x + w, y + h), (x, y + h)]


# -- temporal averaging ------------------------------------------------------

def anchor_index(vertices: Sequence[Point]) -> int:
    """Index of the lowest-then-leftmost vertex (smallest y, then smallest x)."""
    return min(range(len(vertices)), key=lambda i: (vertices[i][1], vertices[i][0]))


def resample(vertices: Sequence[Point], m: int) -> np.ndarray:
    """``m`` boundary points equally spaced by arc length, starting at the anchor vertex."""
    pts = np.asarray(vertices, dtype=float)
    k = anchor_index(vertices)
    pts = np.roll(pts, -k, axis=0)
    closed = np.vstack([pts, pts[:1]])
    seg = np.diff(closed, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    perimeter = cum[-1]
    s = np.arange(m) * (perimeter / m)
    idx = np.searchsorted(cum, s, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = np.where(seg_len[idx] > 0, (s - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0), 0.0)
    return closed[idx] + seg[idx] * frac[:, None]


def _best_shift(reference: np.ndarray, pts: np.ndarray) -> int:
    n = len(pts)
    best, best_cost = 0, math.inf
    for k in range(n):
        cost = float(np.sum((np.roll(pts, -k, axis=0) - reference) ** 2))
        if cost < best_cost - 1e-12:
            best, best_cost = k, cost
    return best


def _drop_collinear(pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    dedup = [pts[0]]
    for p in pts[1:]:
        if np.hypot(*(p - dedup[-1])) > 1e-12:
            dedup.append(p)
    if len(dedup) > 1 and np.hypot(*(dedup[0] - dedup[-1])) <= 1e-12:
        dedup.pop()
    pts = np.asarray(dedup)
    keep = []
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        e1, e2 = b - a, c - b
        scale = float(np.hypot(*e1) * np.hypot(*e2))
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) > tol * scale:
            keep.append(i)
    return pts[keep]


def temporal_average(hulls: Sequence[Polygon], m: int = DEFAULT_RESAMPLE_POINTS) -> Polygon:
    """Average a window of per-frame hulls into one polygon.

    When every hull in the window has the same vertex count the vertices are
    averaged directly; otherwise each hull is resampled to ``m`` arc-length
    equispaced boundary points. Either way each hull is cyclically aligned to
    the first one (least squares) before the per-index mean, which keeps the
    correspondence stable when the lowest vertex flips under jitter.
    """
    if not hulls:
        raise EmptyWindow("temporal_average needs at least one hull")
    counts = {len(h.vertices) for h in hulls}
    if len(counts) == 1:
        k0 = anchor_index(hulls[0].vertices)
        arrays = [np.asarray(h.vertices, dtype=float) for h in hulls]
        reference = np.roll(arrays[0], -k0, axis=0)
    else:
        arrays = [resample(h.vertices, m) for h in hulls]
        reference = arrays[0]
    acc = np.zeros_like(reference)
    for arr in arrays:
        acc += np.roll(arr, -_best_shift(reference, arr), axis=0)
    mean = acc / len(arrays)
    mean = _drop_collinear(mean)
    if len(mean) < 3:
        raise DegenerateInput("averaged hull collapsed")
    verts = tuple((float(x), float(y)) for x, y in mean)
    if signed_area(verts) <= 0:
        verts = tuple(reversed(verts))
    if not is_simple(verts):
        raise DegenerateInput("averaged hull is not simple")
    return Polygon(verts)


# -- rasterization -----------------------------------------------------------

def rasterize(polygon: Polygon, frame_dims: tuple[int, int], cell_px: int) -> np.ndarray:
    """Boolean grid, ``True`` where the cell centre lies inside ``polygon`` (even-odd)."""
    width, height = frame_dims
    cols = int(math.ceil(width / cell_px))
    rows = int(math.ceil(height / cell_px))
    xs = (np.arange(cols) + 0.5) * cell_px
    ys = (np.arange(rows) + 0.5) * cell_px
    gx, gy = np.meshgrid(xs, ys)
    inside = np.zeros((rows, cols), dtype=bool)
    verts = polygon.vertices
    n = len(verts)
    for i in range(n):
        xi, yi = verts[i]
        xj, yj = verts[i - 1]
        if yi == yj:
            continue
        straddle = (yi > gy) != (yj > gy)
        x_cross = xi + (gy - yi) * (xj - xi) / (yj - yi)
        inside ^= straddle & (gx < x_cross)
    return inside


# -- vector helpers ------------------------------------------------------------

def unit(v: Sequence[float]) -> tuple[float, float]:
    n = math.hypot(v[0], v[1])
    if n == 0:
        raise DegenerateInput("zero-length vector")
    return (v[0] / n, v[1] / n)


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[0] + a[1] * b[1]


def angle_between_deg(a: Sequence[float], b: Sequence[float]) -> float:
    na, nb = math.hypot(*a), math.hypot(*b)
    if na == 0 or nb == 0:
        return 0.0
    # atan2 stays accurate near 0 and 180 degrees where acos does not
    return math.degrees(math.atan2(abs(a[0] * b[1] - a[1] * b[0]), dot(a, b)))

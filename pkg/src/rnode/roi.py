"""Automatic violation-zone derivation from static scene detections.

Per frame, the static classes (zebra crossing, lane, divider) are reduced to
convex hulls; hulls are averaged over the last ``K`` frames of the
calibration window; the averaged polygons then yield the stop line, lane
direction, U-turn zones A/B/C around divider openings and the two speed
lines. The resulting :class:`ZoneSet` is frozen for the rest of the run.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AmbiguousLaneAxis, DegenerateInput, NoStaticFeatures
from .geometry import (DEFAULT_RESAMPLE_POINTS, Point, Polygon, Segment, bbox_corners, convex_hull, dot,
                       rasterize, signed_area, temporal_average)
from .trace import Detection, DetectionFrame, ObjectClass, STATIC_CLASSES


@dataclass
class RoiConfig:
    K: int = 30
    raster_cell_px: int = 4
    calibration_frames: int = 300
    speed_distance_m: float = 100.0
    speed_anchors: tuple[float, float] = (0.25, 0.75)
    resample_points: int = DEFAULT_RESAMPLE_POINTS
    min_axis_ratio: float = 1.2

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.raster_cell_px < 1:
            raise ValueError("raster_cell_px must be >= 1")
        if self.speed_distance_m <= 0:
            raise ValueError("speed_distance_m must be > 0")
        a, b = self.speed_anchors
        if not 0.0 <= a < b <= 1.0:
            raise ValueError("speed_anchors must satisfy 0 <= start < stop <= 1")


@dataclass(frozen=True)
class DividerZones:
    a: Polygon
    b: Polygon
    c: Polygon

    def zone_of(self, p: Point) -> Optional[str]:
        if self.b.contains(p):
            return "B"
        if self.a.contains(p):
            return "A"
        if self.c.contains(p):
            return "C"
        return None


@dataclass(frozen=True)
class SpeedLines:
    start: Segment
    stop: Segment
    distance_m: float

    def __post_init__(self) -> None:
        if not self.distance_m > 0:
            raise ValueError("distance_m must be > 0")


@dataclass
class ZoneSet:
    lane_vector: tuple[float, float] = (0.0, 1.0)
    zebra: Optional[Polygon] = None
    stop_line: Optional[Segment] = None
    lane_regions: tuple[Polygon, ...] = ()
    lane_hull: Optional[Polygon] = None
    divider_zones: tuple[DividerZones, ...] = ()
    speed_lines: Optional[SpeedLines] = None
    frame_dims: tuple[int, int] = (0, 0)
    raster_cell_px: int = 4
    masks: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        n = math.hypot(*self.lane_vector)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"lane_vector must be unit length, got norm {n}")

    def in_lane(self, p: Point) -> bool:
        if self.lane_hull is not None:
            return self.lane_hull.contains(p)
        return any(r.contains(p) for r in self.lane_regions)

    def build_masks(self) -> dict:
        dims = self.frame_dims
        if dims[0] <= 0 or dims[1] <= 0:
            return {}
        cell = self.raster_cell_px
        masks = {}
        if self.zebra is not None:
            masks["zebra"] = rasterize(self.zebra, dims, cell)
        if self.lane_hull is not None:
            masks["lane"] = rasterize(self.lane_hull, dims, cell)
        for i, region in enumerate(self.lane_regions):
            masks[f"lane_{i}"] = rasterize(region, dims, cell)
        for i, dz in enumerate(self.divider_zones):
            for name, poly in (("A", dz.a), ("B", dz.b), ("C", dz.c)):
                masks[f"divider_{i}_{name}"] = rasterize(poly, dims, cell)
        self.masks = masks
        return masks

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        def poly(p: Optional[Polygon]):
            return [list(v) for v in p.vertices] if p is not None else None

        def seg(s: Optional[Segment]):
            return [list(s[0]), list(s[1])] if s is not None else None

        return {
            "format": "rnode-zones/1",
            "frame_dims": list(self.frame_dims),
            "raster_cell_px": self.raster_cell_px,
            "lane_vector": list(self.lane_vector),
            "zebra": poly(self.zebra),
            "stop_line": seg(self.stop_line),
            "lane_hull": poly(self.lane_hull),
            "lane_regions": [poly(r) for r in self.lane_regions],
            "divider_zones": [{"A": poly(d.a), "B": poly(d.b), "C": poly(d.c)} for d in self.divider_zones],
            "speed_lines": None if self.speed_lines is None else {
                "start": seg(self.speed_lines.start),
                "stop": seg(self.speed_lines.stop),
                "distance_m": self.speed_lines.distance_m,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ZoneSet":
        def poly(v):
            return Polygon(tuple((float(x), float(y)) for x, y in v)) if v is not None else None

        def seg(v):
            return ((float(v[0][0]), float(v[0][1])), (float(v[1][0]), float(v[1][1]))) if v is not None else None

        sl = raw.get("speed_lines")
        zs = cls(
            lane_vector=(float(raw["lane_vector"][0]), float(raw["lane_vector"][1])),
            zebra=poly(raw.get("zebra")),
            stop_line=seg(raw.get("stop_line")),
            lane_hull=poly(raw.get("lane_hull")),
            lane_regions=tuple(poly(r) for r in raw.get("lane_regions", [])),
            divider_zones=tuple(DividerZones(poly(d["A"]), poly(d["B"]), poly(d["C"]))
                                for d in raw.get("divider_zones", [])),
            speed_lines=None if sl is None else SpeedLines(seg(sl["start"]), seg(sl["stop"]), float(sl["distance_m"])),
            frame_dims=tuple(raw.get("frame_dims", (0, 0))),
            raster_cell_px=int(raw.get("raster_cell_px", 4)),
        )
        zs.build_masks()
        return zs

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ZoneSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- derivation ---------------------------------------------------------------

def _frame_dets(item) -> list[Detection]:
    if isinstance(item, DetectionFrame):
        return [d for d in item.detections if d.class_id in STATIC_CLASSES]
    return [d for d in item if d.class_id in STATIC_CLASSES]


def _union_hull(dets: Sequence[Detection]) -> Polygon:
    pts: list[Point] = []
    for d in dets:
        pts.extend(bbox_corners(d.bbox))
    return convex_hull(pts)


def _averaged_union(frames: Sequence[list[Detection]], cls: ObjectClass, cfg: RoiConfig) -> Optional[Polygon]:
    hulls = []
    for dets in reversed(frames):
        chosen = [d for d in dets if d.class_id == cls]
        if chosen:
            hulls.append(_union_hull(chosen))
            if len(hulls) == cfg.K:
                break
    if not hulls:
        return None
    hulls.reverse()
    return temporal_average(hulls, cfg.resample_points)


def _averaged_ranked(frames: Sequence[list[Detection]], cls: ObjectClass, key, cfg: RoiConfig) -> list[Polygon]:
    """Average one hull per detection, matching detections across frames by rank of ``key``."""
    per_frame = [sorted((d for d in dets if d.class_id == cls), key=lambda d: key(d.center)) for dets in frames]
    per_frame = [p for p in per_frame if p]
    if not per_frame:
        return []
    modal = Counter(len(p) for p in per_frame[-cfg.K:]).most_common(1)[0][0]
    usable = [p for p in per_frame if len(p) == modal][-cfg.K:]
    out = []
    for rank in range(modal):
        hulls = [convex_hull(bbox_corners(p[rank].bbox)) for p in usable]
        out.append(temporal_average(hulls, cfg.resample_points))
    return out


def principal_axis(poly: Polygon, min_ratio: float) -> tuple[float, float]:
    pts = poly.as_array()
    cov = np.cov(pts.T, bias=True)
    evals, evecs = np.linalg.eigh(cov)
    lo, hi = float(evals[0]), float(evals[1])
    if lo > 0 and hi / lo < min_ratio:
        raise AmbiguousLaneAxis(f"lane covariance eigenvalue ratio {hi / lo:.3f} < {min_ratio}")
    v = evecs[:, 1]
    v = v / np.hypot(v[0], v[1])
    return (float(v[0]), float(v[1]))


def _fix_sign(axis: tuple[float, float], displacements: Sequence[tuple[Point, Point]],
              lane_hull: Optional[Polygon]) -> tuple[float, float]:
    disp = list(displacements)
    if lane_hull is not None:
        inside = [(a, b) for a, b in disp if lane_hull.contains(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))]
        disp = inside or disp
    votes = 0
    for a, b in disp:
        d = dot((b[0] - a[0], b[1] - a[1]), axis)
        votes += (d > 0) - (d < 0)
    if votes < 0 or (votes == 0 and (axis[1] < 0 or (axis[1] == 0 and axis[0] < 0))):
        return (-axis[0], -axis[1])
    return axis


def _uw_range(poly: Polygon, u: Sequence[float], w: Sequence[float]) -> tuple[float, float, float, float]:
    pts = poly.as_array()
    pu = pts @ np.asarray(u)
    pw = pts @ np.asarray(w)
    return float(pu.min()), float(pu.max()), float(pw.min()), float(pw.max())


def _uw_rect(u: Sequence[float], w: Sequence[float], u0: float, u1: float, w0: float, w1: float) -> Polygon:
    def xy(a: float, b: float) -> Point:
        return (a * u[0] + b * w[0], a * u[1] + b * w[1])

    verts = [xy(u0, w0), xy(u1, w0), xy(u1, w1), xy(u0, w1)]
    if signed_area(verts) < 0:
        verts.reverse()
    return Polygon(tuple(verts))


def _stop_line(zebra: Polygon, lane_hull: Optional[Polygon], lane_vector: tuple[float, float]) -> Segment:
    edges = zebra.edges()
    p0, p1 = min(edges, key=lambda e: ((e[0][1] + e[1][1]) / 2.0, (e[0][0] + e[1][0]) / 2.0))
    d = np.array([p1[0] - p0[0], p1[1] - p0[1]])
    length = float(np.hypot(*d))
    if length == 0:
        raise DegenerateInput("zero-length zebra edge")
    d /= length
    t_lo, t_hi = 0.0, length
    if lane_hull is not None:
        proj = (lane_hull.as_array() - np.asarray(p0)) @ d
        t_lo, t_hi = min(t_lo, float(proj.min())), max(t_hi, float(proj.max()))
    a = (p0[0] + d[0] * t_lo, p0[1] + d[1] * t_lo)
    b = (p0[0] + d[0] * t_hi, p0[1] + d[1] * t_hi)
    # fixed orientation relative to lane_vector (cross(segment, lane_vector) >= 0)
    if (b[0] - a[0]) * lane_vector[1] - (b[1] - a[1]) * lane_vector[0] < 0:
        a, b = b, a
    return (a, b)


def derive_zones(static_history: Sequence, config: RoiConfig | None = None,
                 frame_dims: tuple[int, int] = (0, 0),
                 vehicle_displacements: Iterable[tuple[Point, Point]] = ()) -> ZoneSet:
    """Derive the frozen :class:`ZoneSet` from a calibration window.

    ``static_history`` holds one entry per calibration frame: either a
    :class:`DetectionFrame` or a list of detections. ``vehicle_displacements``
    are ``(first_point, last_point)`` pairs of tracks observed during
    calibration; they fix the sign of the lane direction.
    """
    cfg = config or RoiConfig()
    frames = [_frame_dets(item) for item in static_history]
    frames = [f for f in frames if f]
    if not frames:
        raise NoStaticFeatures("calibration window contains no static detections")
    displacements = list(vehicle_displacements)

    lane_hull = _averaged_union(frames, ObjectClass.LANE, cfg)
    if lane_hull is not None:
        axis = principal_axis(lane_hull, cfg.min_axis_ratio)
    else:
        mean = np.zeros(2)
        for a, b in displacements:
            mean += np.subtract(b, a)
        axis = tuple(mean / np.hypot(*mean)) if np.hypot(*mean) > 0 else (0.0, 1.0)
    lane_vector = _fix_sign(axis, displacements, lane_hull)
    u = lane_vector
    w = (-u[1], u[0])

    lane_regions = _averaged_ranked(frames, ObjectClass.LANE, lambda c: dot(c, w), cfg) if lane_hull else []

    zebra = _averaged_union(frames, ObjectClass.ZEBRA_CROSSING, cfg)
    stop_line = _stop_line(zebra, lane_hull, lane_vector) if zebra is not None else None

    dividers = _averaged_ranked(frames, ObjectClass.DIVIDER, lambda c: dot(c, u), cfg)
    divider_zones = []
    if len(dividers) >= 2:
        if lane_regions:
            lane_width = float(np.median([r[3] - r[2] for r in (_uw_range(p, u, w) for p in lane_regions)]))
        elif lane_hull is not None:
            r = _uw_range(lane_hull, u, w)
            lane_width = r[3] - r[2]
        else:
            lane_width = 0.0
        lane_mid_w = None
        if lane_hull is not None:
            r = _uw_range(lane_hull, u, w)
            lane_mid_w = (r[2] + r[3]) / 2.0
        ranges = sorted((_uw_range(p, u, w) for p in dividers), key=lambda r: r[0])
        for first, second in zip(ranges, ranges[1:]):
            g0, g1 = first[1], second[0]
            if g1 <= g0:
                continue
            w0 = min(first[2], second[2])
            w1 = max(first[3], second[3])
            depth = lane_width if lane_width > 0 else (g1 - g0)
            b_zone = _uw_rect(u, w, g0, g1, w0, w1)
            low = _uw_rect(u, w, g0, g1, w0 - depth, w0)
            high = _uw_rect(u, w, g0, g1, w1, w1 + depth)
            # A is the side facing the monitored lanes
            if lane_mid_w is not None and lane_mid_w > (w0 + w1) / 2.0:
                divider_zones.append(DividerZones(high, b_zone, low))
            else:
                divider_zones.append(DividerZones(low, b_zone, high))

    speed_lines = None
    if lane_hull is not None:
        u0, u1, w0, w1 = _uw_range(lane_hull, u, w)
        a0, a1 = cfg.speed_anchors

        def line_at(frac: float) -> Segment:
            at = u0 + frac * (u1 - u0)
            return ((at * u[0] + w0 * w[0], at * u[1] + w0 * w[1]),
                    (at * u[0] + w1 * w[0], at * u[1] + w1 * w[1]))

        speed_lines = SpeedLines(line_at(a0), line_at(a1), cfg.speed_distance_m)

    zones = ZoneSet(
        lane_vector=(float(lane_vector[0]), float(lane_vector[1])),
        zebra=zebra,
        stop_line=stop_line,
        lane_regions=tuple(lane_regions),
        lane_hull=lane_hull,
        divider_zones=tuple(divider_zones),
        speed_lines=speed_lines,
        frame_dims=tuple(frame_dims),
        raster_cell_px=cfg.raster_cell_px,
    )
    zones.build_masks()
    return zones

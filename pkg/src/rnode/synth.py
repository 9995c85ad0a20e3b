"""Synthetic labeled scenarios.

Scenes are modeled top-down in world meters and projected to pixels with a
fixed affine map (``px = m * scale``). World +y is the monitored lanes'
traffic direction and image y grows downwards, so traffic moves down the
frame. Vehicles follow polyline paths with piecewise-constant speed
profiles and optional timed stops. Ground truth is computed from the
generated trajectories, and scripted violations are checked against them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleScript
from .geometry import Point, Polygon, Segment
from .plate import DEFAULT_CONFUSIONS, DEFAULT_PATTERNS
from .roi import DividerZones
from .trace import (Detection, DetectionFrame, GroundTruth, ObjectClass, PlateReading, Scenario, SignalPhase,
                    frame_times_us)
from .violations import SPEED_TRUTH, ViolationClass, crossing_sides

Rect = tuple[float, float, float, float]  # x0, y0, x1, y1 in meters

VEHICLE_SIZE_M = {"VEHICLE": (2.0, 4.5), "TWO_WHEELER": (0.8, 2.0)}
_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
_DIGITS = "0123456789"


@dataclass
class SceneGeometry:
    lanes: tuple[Rect, ...]
    zebra: Optional[Rect] = None
    dividers: tuple[Rect, ...] = ()
    size_m: tuple[float, float] = (17.0, 220.0)
    scale_px_per_m: float = 10.0

    @property
    def frame_dims(self) -> tuple[int, int]:
        return (int(round(self.size_m[0] * self.scale_px_per_m)), int(round(self.size_m[1] * self.scale_px_per_m)))

    def px(self, p: Point) -> Point:
        return (p[0] * self.scale_px_per_m, p[1] * self.scale_px_per_m)

    def lane_extent(self) -> Rect:
        return (min(r[0] for r in self.lanes), min(r[1] for r in self.lanes),
                max(r[2] for r in self.lanes), max(r[3] for r in self.lanes))

    def in_lanes(self, p_px: Point) -> bool:
        s = self.scale_px_per_m
        x, y = p_px[0] / s, p_px[1] / s
        return any(r[0] < x < r[2] and r[1] < y < r[3] for r in self.lanes)


@dataclass
class VehicleSpec:
    label: str
    path: tuple[Point, ...]
    speed_kmh: float
    enter_s: float = 0.0
    # (arc length m, km/h) breakpoints overriding speed_kmh from that arc length on
    profile: tuple[tuple[float, float], ...] = ()
    # (arc length m, resume time s): halt at that arc length until the resume time
    stops: tuple[tuple[float, float], ...] = ()
    kind: str = "VEHICLE"
    plate: Optional[str] = None
    scripts: tuple[str, ...] = ()
    occlusions: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if len(self.path) < 2:
            raise InfeasibleScript(f"{self.label}: path needs >= 2 waypoints")
        if self.speed_kmh <= 0 or any(v <= 0 for _, v in self.profile):
            raise InfeasibleScript(f"{self.label}: speeds must be > 0")
        if self.kind not in VEHICLE_SIZE_M:
            raise InfeasibleScript(f"{self.label}: unknown vehicle kind {self.kind}")
        for s in self.scripts:
            ViolationClass(s)


@dataclass
class ScenarioSpec:
    geometry: SceneGeometry
    vehicles: tuple[VehicleSpec, ...] = ()
    signal_plan: tuple[tuple[float, str], ...] = ((0.0, "GREEN"),)
    duration_s: float = 60.0
    frame_rate: float = 30.0
    epoch_us: int = 1_700_000_000_000_000
    plate_corruption: float = 0.1
    plate_every: int = 3
    bbox_noise_px: float = 0.0
    static_noise_px: float = 0.0
    embedding_dim: int = 32
    embedding_noise: float = 0.05
    speed_anchors: tuple[float, float] = (0.25, 0.75)
    speed_limit_kmh: float = 60.0
    uturn_window_s: float = 6.0
    uturn_exit_frames: int = 30
    hold_frames: int = 15

    @property
    def speed_distance_m(self) -> float:
        _, y0, _, y1 = self.geometry.lane_extent()
        return (self.speed_anchors[1] - self.speed_anchors[0]) * (y1 - y0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioSpec":
        raw = dict(raw)
        g = dict(raw.pop("geometry"))
        geom = SceneGeometry(
            lanes=tuple(tuple(r) for r in g["lanes"]),
            zebra=tuple(g["zebra"]) if g.get("zebra") else None,
            dividers=tuple(tuple(r) for r in g.get("dividers", ())),
            size_m=tuple(g.get("size_m", (17.0, 220.0))),
            scale_px_per_m=float(g.get("scale_px_per_m", 10.0)),
        )
        vehicles = []
        for v in raw.pop("vehicles", ()):
            v = dict(v)
            v["path"] = tuple(tuple(p) for p in v["path"])
            for k in ("profile", "stops", "occlusions"):
                v[k] = tuple(tuple(p) for p in v.get(k, ()))
            v["scripts"] = tuple(v.get("scripts", ()))
            vehicles.append(VehicleSpec(**v))
        if "signal_plan" in raw:
            raw["signal_plan"] = tuple((float(t), str(p)) for t, p in raw["signal_plan"])
        for k in ("speed_anchors",):
            if k in raw:
                raw[k] = tuple(raw[k])
        return cls(geometry=geom, vehicles=tuple(vehicles), **raw)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")


# -- plates -------------------------------------------------------------------

def random_plate(rng: np.random.Generator, patterns: Sequence[str] = DEFAULT_PATTERNS) -> str:
    pattern = patterns[int(rng.integers(len(patterns)))]
    return "".join(_LETTERS[int(rng.integers(26))] if c == "A" else _DIGITS[int(rng.integers(10))]
                   for c in pattern)


def corrupt_plate(text: str, p: float, rng: np.random.Generator,
                  confusions: dict[str, str] = DEFAULT_CONFUSIONS) -> tuple[str, float]:
    """Per-character confusion substitution with probability ``p``; returns (text, confidence)."""
    out = []
    for ch in text:
        sub = confusions.get(ch)
        if sub is not None and rng.random() < p:
            out.append(sub)
        else:
            out.append(ch)
    conf = 0.95 - 2.0 * p + rng.uniform(-0.05, 0.05)
    return "".join(out), float(min(1.0, max(0.0, conf)))


# -- kinematics ---------------------------------------------------------------

class Trajectory:
    """Arc-length parameterized motion along a polyline."""

    def __init__(self, spec: VehicleSpec) -> None:
        pts = np.asarray(spec.path, dtype=float)
        seg = np.diff(pts, axis=0)
        self.pts = pts
        self.seg = seg
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self.seg_len <= 0):
            raise InfeasibleScript(f"{spec.label}: repeated waypoint")
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])
        self.enter = spec.enter_s
        # pieces of (t_start, s_start, v m/s); v == 0 for halts
        breaks = sorted([(s, "v", kmh / 3.6) for s, kmh in spec.profile]
                        + [(s, "stop", t) for s, t in spec.stops], key=lambda b: (b[0], b[1] == "v"))
        pieces = []
        t, s, v = spec.enter_s, 0.0, spec.speed_kmh / 3.6
        for at, kind, val in breaks:
            if at < s - 1e-9 or at > self.length:
                raise InfeasibleScript(f"{spec.label}: breakpoint at {at} m outside path")
            if at > s:
                pieces.append((t, s, v))
                t += (at - s) / v
                s = at
            if kind == "v":
                v = val
            elif val > t:
                pieces.append((t, s, 0.0))
                t = val
        pieces.append((t, s, v))
        self.pieces = pieces
        last_t, last_s, last_v = pieces[-1]
        self.exit = last_t + (self.length - last_s) / last_v

    def s_at(self, t: float) -> Optional[float]:
        if t < self.enter or t > self.exit:
            return None
        k = 0
        while k + 1 < len(self.pieces) and self.pieces[k + 1][0] <= t:
            k += 1
        t0, s0, v = self.pieces[k]
        return min(self.length, s0 + v * (t - t0))

    def speed_at(self, t: float) -> float:
        k = 0
        while k + 1 < len(self.pieces) and self.pieces[k + 1][0] <= t:
            k += 1
        return self.pieces[k][2]

    def pose(self, s: float) -> tuple[Point, tuple[float, float]]:
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.seg) - 1)
        frac = (s - self.cum[i]) / self.seg_len[i]
        p = self.pts[i] + self.seg[i] * frac
        h = self.seg[i] / self.seg_len[i]
        return (float(p[0]), float(p[1])), (float(h[0]), float(h[1]))


def _box_m(center: Point, heading: tuple[float, float], size: tuple[float, float]) -> Rect:
    w, l = size
    hx, hy = abs(heading[0]), abs(heading[1])
    ex = hx * l + hy * w
    ey = hy * l + hx * w
    return (center[0] - ex / 2, center[1] - ey / 2, center[0] + ex / 2, center[1] + ey / 2)


def _phase_at(plan: Sequence[tuple[float, str]], t: float) -> SignalPhase:
    phase = SignalPhase.NONE
    for start, name in plan:
        if start <= t + 1e-9:
            phase = SignalPhase(name)
    return phase


def _unit_vec(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _embedding(base: np.ndarray, noise: float, rng: np.random.Generator) -> tuple[float, ...]:
    v = base + noise * rng.standard_normal(base.shape) / math.sqrt(len(base))
    v = v / np.linalg.norm(v)
    return tuple(float(x) for x in np.round(v, 8))


# -- scene lines and zones (mirrors zone derivation on exact geometry) -------

def scene_lines(spec: ScenarioSpec) -> dict[str, Optional[Segment]]:
    g = spec.geometry
    s = g.scale_px_per_m
    x0, y0, x1, y1 = g.lane_extent()
    out: dict[str, Optional[Segment]] = {"stop": None}
    if g.zebra is not None:
        zy = g.zebra[1]
        out["stop"] = ((x1 * s, zy * s), (x0 * s, zy * s))
    for name, frac in (("speed_start", spec.speed_anchors[0]), ("speed_stop", spec.speed_anchors[1])):
        at = (y0 + frac * (y1 - y0)) * s
        out[name] = ((x1 * s, at), (x0 * s, at))
    return out


def scene_divider_zones(spec: ScenarioSpec) -> list[DividerZones]:
    g = spec.geometry
    s = g.scale_px_per_m
    divs = sorted(g.dividers, key=lambda r: r[1])
    lane_w = float(np.median([r[2] - r[0] for r in g.lanes]))
    lx0, _, lx1, _ = g.lane_extent()
    out = []
    for a, b in zip(divs, divs[1:]):
        gy0, gy1 = a[3], b[1]
        if gy1 <= gy0:
            continue
        dx0, dx1 = min(a[0], b[0]), max(a[2], b[2])
        zb = Polygon.from_rect(dx0 * s, gy0 * s, dx1 * s, gy1 * s)
        left = Polygon.from_rect((dx0 - lane_w) * s, gy0 * s, dx0 * s, gy1 * s)
        right = Polygon.from_rect(dx1 * s, gy0 * s, (dx1 + lane_w) * s, gy1 * s)
        if (lx0 + lx1) / 2 > (dx0 + dx1) / 2:
            out.append(DividerZones(right, zb, left))
        else:
            out.append(DividerZones(left, zb, right))
    return out


# -- generation ---------------------------------------------------------------

@dataclass
class _Sample:
    frame: int
    t: float
    box_m: Rect
    point_px: Point
    moving: bool
    visible: bool


def _samples(spec: ScenarioSpec, traj: Trajectory, vehicle: VehicleSpec, n_frames: int) -> list[_Sample]:
    g = spec.geometry
    size = VEHICLE_SIZE_M[vehicle.kind]
    out = []
    first = max(0, int(math.ceil(traj.enter * spec.frame_rate - 1e-9)))
    last = min(n_frames - 1, int(math.floor(traj.exit * spec.frame_rate + 1e-9)))
    heading = None
    for i in range(first, last + 1):
        t = i / spec.frame_rate
        s = traj.s_at(t)
        if s is None:
            continue
        center, h = traj.pose(s)
        heading = h if heading is None or traj.speed_at(t) > 0 else heading
        box = _box_m(center, heading, size)
        inside = box[0] >= 0 and box[1] >= 0 and box[2] <= g.size_m[0] and box[3] <= g.size_m[1]
        if not inside:
            continue
        occluded = any(a <= t < b for a, b in vehicle.occlusions)
        x, y, w, h = _noisy_box(box, g.scale_px_per_m, 0.0, None, g.frame_dims)
        point = (x + w / 2.0, y + h)
        out.append(_Sample(i, t, box, point, traj.speed_at(t) > 0, not occluded))
    return out


def _crossing_frames(samples: Sequence[_Sample], line: Segment, forward: tuple[float, float]) -> list[tuple[int, int]]:
    """(frame, sign) for each crossing of ``line``; sign +1 along ``forward``."""
    out = []
    for a, b in zip(samples, samples[1:]):
        if crossing_sides(a.point_px, b.point_px, line) is not None:
            d = (b.point_px[0] - a.point_px[0]) * forward[0] + (b.point_px[1] - a.point_px[1]) * forward[1]
            out.append((b.frame, 1 if d > 0 else -1))
    return out


def _check_collisions(spec: ScenarioSpec, tracks: dict[str, list[_Sample]]) -> None:
    by_frame: dict[int, list[tuple[str, Rect]]] = {}
    for label, samples in tracks.items():
        for smp in samples:
            by_frame.setdefault(smp.frame, []).append((label, smp.box_m))
    for frame, boxes in by_frame.items():
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i][1], boxes[j][1]
                if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
                    raise InfeasibleScript(f"vehicles {boxes[i][0]} and {boxes[j][0]} overlap at frame {frame}")


def _ground_truth(spec: ScenarioSpec, vehicle: VehicleSpec, samples: list[_Sample], traj: Trajectory,
                  phases: Sequence[SignalPhase]) -> list[GroundTruth]:
    g = spec.geometry
    fwd = (0.0, 1.0)
    lines = scene_lines(spec)
    out: list[GroundTruth] = []
    scripts = set(vehicle.scripts)
    label, plate = vehicle.label, vehicle.plate

    def fail(msg: str) -> InfeasibleScript:
        return InfeasibleScript(f"{label}: {msg}")

    # stop line
    stop_cross = _crossing_frames(samples, lines["stop"], fwd) if lines["stop"] else []
    red_cross = [f for f, sgn in stop_cross if sgn > 0 and phases[f] is SignalPhase.RED]
    if ViolationClass.SIGNAL_JUMP.value in scripts:
        if not red_cross:
            raise fail("scripted SIGNAL_JUMP does not cross the stop line during RED")
        out.append(GroundTruth(ViolationClass.SIGNAL_JUMP.value, label, (red_cross[0], red_cross[0]), None, plate))
    elif red_cross:
        raise fail(f"unscripted stop-line crossing during RED at frame {red_cross[0]}")

    if ViolationClass.ZEBRA_BREACH.value in scripts:
        if g.zebra is None:
            raise fail("ZEBRA_BREACH scripted without a zebra crossing")
        if red_cross:
            raise fail("ZEBRA_BREACH vehicle crosses the stop line during RED")
        zebra = Polygon.from_rect(*(c * g.scale_px_per_m for c in g.zebra))
        run: list[int] = []
        best: list[int] = []
        for smp in samples:
            ok = (not smp.moving and phases[smp.frame] is SignalPhase.RED and zebra.contains(smp.point_px))
            if ok and (not run or run[-1] == smp.frame - 1):
                run.append(smp.frame)
            elif ok:
                run = [smp.frame]
            else:
                run = []
            if len(run) > len(best):
                best = list(run)
        if len(best) < 2:
            raise fail("scripted ZEBRA_BREACH never halts inside the zebra during RED")
        out.append(GroundTruth(ViolationClass.ZEBRA_BREACH.value, label, (best[0], best[-1]), None, plate))

    if ViolationClass.WRONG_WAY.value in scripts:
        against = [b.frame for a, b in zip(samples, samples[1:])
                   if g.in_lanes(b.point_px) and (b.point_px[1] - a.point_px[1]) * fwd[1] < 0]
        if len(against) < 30:
            raise fail("scripted WRONG_WAY spends too little time moving against traffic in the lanes")
        out.append(GroundTruth(ViolationClass.WRONG_WAY.value, label, (against[0], against[-1]), None, plate))

    if ViolationClass.ILLEGAL_UTURN.value in scripts:
        zones = scene_divider_zones(spec)
        if not zones:
            raise fail("ILLEGAL_UTURN scripted but the scene has no divider opening")
        span = _uturn_span(spec, zones, samples)
        if span is None:
            raise fail("scripted ILLEGAL_UTURN does not traverse A, B and C within the window")
        out.append(GroundTruth(ViolationClass.ILLEGAL_UTURN.value, label, span, None, plate))

    # speed lines
    starts = [f for f, sgn in _crossing_frames(samples, lines["speed_start"], fwd) if sgn > 0]
    stops = [f for f, sgn in _crossing_frames(samples, lines["speed_stop"], fwd) if sgn > 0]
    if starts and stops and stops[0] > starts[0]:
        v_true = _true_speed_kmh(spec, traj, VEHICLE_SIZE_M[vehicle.kind])
        cls = ViolationClass.SPEEDING.value if v_true > spec.speed_limit_kmh else SPEED_TRUTH
        if cls == ViolationClass.SPEEDING.value and cls not in scripts:
            raise fail(f"unscripted speeding at {v_true:.1f} km/h")
        out.append(GroundTruth(cls, label, (starts[0], stops[0]), v_true, plate))
    elif ViolationClass.SPEEDING.value in scripts:
        raise fail("scripted SPEEDING does not cross both speed lines")
    return out


def _true_speed_kmh(spec: ScenarioSpec, traj: Trajectory, size: tuple[float, float]) -> float:
    """Average speed between the two speed lines, from the continuous trajectory."""
    lines = scene_lines(spec)
    s = spec.geometry.scale_px_per_m
    y_start = lines["speed_start"][0][1] / s
    y_stop = lines["speed_stop"][0][1] / s

    def time_at(y_ref: float) -> float:
        lo, hi = traj.enter, traj.exit
        for _ in range(200):
            mid = (lo + hi) / 2
            c, h = traj.pose(traj.s_at(mid))
            front = c[1] + (abs(h[1]) * size[1] + abs(h[0]) * size[0]) / 2
            if front < y_ref:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2

    return 3.6 * (y_stop - y_start) / (time_at(y_stop) - time_at(y_start))


def _uturn_span(spec: ScenarioSpec, zones: Sequence[DividerZones], samples: Sequence[_Sample]
                ) -> Optional[tuple[int, int]]:
    entries: list[tuple[tuple[int, str], int]] = []
    last = None
    for smp in samples:
        zone = None
        for idx, dz in enumerate(zones):
            name = dz.zone_of(smp.point_px)
            if name is not None:
                zone = (idx, name)
                break
        if zone is not None and zone != last:
            entries.append((zone, smp.frame))
            last = zone
    for k in range(len(entries) - 2):
        (z0, f0), (z1, _), (z2, f2) = entries[k:k + 3]
        if z0[0] == z1[0] == z2[0] and z0[1] + z1[1] + z2[1] in ("ABC", "CBA"):
            if (f2 - f0) / spec.frame_rate <= spec.uturn_window_s:
                end = f2 + spec.uturn_exit_frames
                for smp in samples:
                    if smp.frame > f2 and zones[z2[0]].zone_of(smp.point_px) != z2[1]:
                        end = min(end, smp.frame)
                        break
                return (f0, end)
    return None


def generate_scenario(spec: ScenarioSpec, seed: int) -> Scenario:
    """Deterministic scenario for ``(spec, seed)``."""
    g = spec.geometry
    rng = np.random.default_rng(seed)
    n_frames = int(round(spec.duration_s * spec.frame_rate))
    dims = g.frame_dims
    scale = g.scale_px_per_m
    phases = [_phase_at(spec.signal_plan, i / spec.frame_rate) for i in range(n_frames)]

    labels = [v.label for v in spec.vehicles]
    if len(set(labels)) != len(labels):
        raise InfeasibleScript("vehicle labels must be unique")
    for v in spec.vehicles:
        if ViolationClass.ILLEGAL_UTURN.value in v.scripts and len(g.dividers) < 2:
            raise InfeasibleScript(f"{v.label}: ILLEGAL_UTURN scripted but the scene has no divider opening")

    trajs = {v.label: Trajectory(v) for v in spec.vehicles}
    samples = {v.label: _samples(spec, trajs[v.label], v, n_frames) for v in spec.vehicles}
    _check_collisions(spec, samples)

    truth: list[GroundTruth] = []
    for v in spec.vehicles:
        truth.extend(_ground_truth(spec, v, samples[v.label], trajs[v.label], phases))

    # per-vehicle appearance and plate streams, drawn in spec order for determinism
    bases = {v.label: _unit_vec(rng, spec.embedding_dim) for v in spec.vehicles}
    streams = {v.label: np.random.default_rng([seed, k]) for k, v in enumerate(spec.vehicles)}
    static_rng = np.random.default_rng([seed, 1_000_003])

    per_frame: list[list[Detection]] = [[] for _ in range(n_frames)]
    for i in range(n_frames):
        for rect, cls in ([(r, ObjectClass.LANE) for r in g.lanes]
                          + ([(g.zebra, ObjectClass.ZEBRA_CROSSING)] if g.zebra else [])
                          + [(r, ObjectClass.DIVIDER) for r in g.dividers]):
            box = _noisy_box(rect, scale, spec.static_noise_px, static_rng, dims)
            per_frame[i].append(Detection(cls, box, 0.9))

    for v in spec.vehicles:
        srng = streams[v.label]
        cls = ObjectClass(v.kind)
        for k, smp in enumerate(samples[v.label]):
            if not smp.visible:
                continue
            box = _noisy_box(smp.box_m, scale, spec.bbox_noise_px, srng, dims)
            conf = float(round(0.85 + 0.1 * srng.random(), 4))
            per_frame[smp.frame].append(Detection(cls, box, conf, _embedding(bases[v.label], spec.embedding_noise, srng)))
            if v.plate is not None and spec.plate_every > 0 and k % spec.plate_every == 0:
                text, pconf = corrupt_plate(v.plate, spec.plate_corruption, srng)
                bx, by, bw, bh = box
                pw, ph = min(bw * 0.5, 5.0), min(bh * 0.2, 1.5)
                pbox = (bx + (bw - pw) / 2, by + bh - ph - 0.5, pw, ph)
                per_frame[smp.frame].append(Detection(ObjectClass.LICENSE_PLATE, pbox, round(pconf, 4), None,
                                                      PlateReading(text, round(pconf, 4))))

    frames = []
    for i in range(n_frames):
        tc, tm = frame_times_us(i, spec.frame_rate, spec.epoch_us)
        frames.append(DetectionFrame(i, tc, tm, phases[i], tuple(per_frame[i])))
    truth.sort(key=lambda gt: (gt.span[0], gt.label, gt.violation_class))
    return Scenario(tuple(frames), spec.frame_rate, dims, tuple(truth))


def _noisy_box(rect_m: Rect, scale: float, noise: float, rng: Optional[np.random.Generator],
               dims: tuple[int, int]) -> tuple[float, float, float, float]:
    x0, y0, x1, y1 = (c * scale for c in rect_m)
    x, y, w, h = x0, y0, x1 - x0, y1 - y0
    if noise > 0:
        dx, dy, dw, dh = rng.normal(0.0, noise, 4)
        x, y, w, h = x + dx, y + dy, max(1.0, w + dw), max(1.0, h + dh)
        x = min(max(0.0, x), dims[0] - w)
        y = min(max(0.0, y), dims[1] - h)
        w = min(w, dims[0] - x)
        h = min(h, dims[1] - y)
    return (round(x, 4), round(y, 4), round(w, 4), round(h, 4))

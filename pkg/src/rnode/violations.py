"""Violation predicates over tracked vehicles, speed estimation and evaluation.

The engine consumes one :class:`TrackSnapshot` per live track per frame and
keeps its own per-track record (observed reference points, zone sequence,
pending speed start, plate ballot). Only observed points enter the
predicates; frames where the tracker merely predicted a box are skipped, so
a crossing that happens during a short occlusion is still caught on
reappearance.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Point, Segment, angle_between_deg, dot, orientation
from .plate import DEFAULT_GRAMMAR, MIN_READINGS, T_VOTE, PlateBallot, PlateGrammar, hash_plate, vote
from .roi import ZoneSet
from .trace import DetectionFrame, GroundTruth, PlateReading, SignalPhase


class ViolationClass(str, enum.Enum):
    SIGNAL_JUMP = "SIGNAL_JUMP"
    ZEBRA_BREACH = "ZEBRA_BREACH"
    WRONG_WAY = "WRONG_WAY"
    ILLEGAL_UTURN = "ILLEGAL_UTURN"
    SPEEDING = "SPEEDING"


# evaluation key: signal jump and stop-on-crosswalk are reported as one class
AGGREGATE_KEYS = {
    ViolationClass.SIGNAL_JUMP.value: "SIGNAL_JUMP+ZEBRA",
    ViolationClass.ZEBRA_BREACH.value: "SIGNAL_JUMP+ZEBRA",
}
SPEED_TRUTH = "SPEED_TRUTH"


@dataclass
class ViolationConfig:
    speed_limit_kmh: float = 60.0
    wrong_way_window: int = 10
    min_motion_px: float = 1.0
    persist_frames: int = 15
    uturn_window_s: float = 6.0
    uturn_min_heading_deg: float = 135.0
    uturn_entry_frames: int = 10
    uturn_exit_frames: int = 30
    hold_frames: int = 15
    stop_eps_px: float = 2.0
    t_vote: int = T_VOTE
    min_readings: int = MIN_READINGS
    # on-device delay between frame capture and event materialization
    log_delay_median_ms: float = 35.0
    log_delay_p95_ms: float = 48.0

    def __post_init__(self) -> None:
        if self.speed_limit_kmh <= 0:
            raise ValueError("speed_limit_kmh must be > 0")
        if self.wrong_way_window < 1 or self.persist_frames < 1 or self.hold_frames < 1:
            raise ValueError("window lengths must be >= 1")
        if self.uturn_window_s <= 0:
            raise ValueError("uturn_window_s must be > 0")
        if not 0 < self.log_delay_median_ms <= self.log_delay_p95_ms:
            raise ValueError("need 0 < log_delay_median_ms <= log_delay_p95_ms")


@dataclass(frozen=True)
class ViolationEvent:
    event_id: int
    violation_class: ViolationClass
    track_id: int
    frame_index: int
    t_capture: int
    t_mono_detect: int
    confidence: float
    speed_kmh: Optional[float] = None
    location: Point = (0.0, 0.0)
    plate_best: Optional[str] = None
    # px/frame, kept in memory for the heading of outgoing messages
    motion: tuple[float, float] = field(default=(0.0, 0.0), compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if (self.speed_kmh is not None) != (self.violation_class is ViolationClass.SPEEDING):
            raise ValueError("speed_kmh is present exactly for SPEEDING events")

    def to_record(self, salt: Optional[bytes] = None) -> dict:
        plate = None
        if self.plate_best is not None and salt is not None:
            plate = hash_plate(self.plate_best, salt)
        return {
            "event_id": self.event_id,
            "class": self.violation_class.value,
            "track_id": self.track_id,
            "frame": self.frame_index,
            "t_utc_us": self.t_capture,
            "t_mono_us": self.t_mono_detect,
            "conf": round(self.confidence, 6),
            "speed_kmh": None if self.speed_kmh is None else round(self.speed_kmh, 6),
            "loc": [round(self.location[0], 3), round(self.location[1], 3)],
            "plate": plate,
        }

    def to_json(self, salt: Optional[bytes] = None) -> str:
        return json.dumps(self.to_record(salt), separators=(",", ":"))

    @classmethod
    def from_record(cls, rec: dict) -> "ViolationEvent":
        """Inverse of :meth:`to_record` up to the plate, which only survives as a hash."""
        return cls(int(rec["event_id"]), ViolationClass(rec["class"]), int(rec["track_id"]), int(rec["frame"]),
                   int(rec["t_utc_us"]), int(rec["t_mono_us"]), float(rec["conf"]), rec.get("speed_kmh"),
                   tuple(rec.get("loc") or (0.0, 0.0)))


@dataclass(frozen=True)
class SpeedCrossing:
    track_id: int
    start_frame: int
    stop_frame: int
    frame_interval: float
    distance_m: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("stop line must be crossed at least one frame after the start line")

    @property
    def n(self) -> int:
        return self.stop_frame - self.start_frame

    @property
    def speed_kmh(self) -> float:
        return speed_kmh(self.distance_m, self.n, self.frame_interval)


def speed_kmh(distance_m: float, n_frames: int, frame_interval: float) -> float:
    """``3.6 * d / (N * T_F)``."""
    if n_frames < 1:
        raise ValueError("N must be >= 1")
    return 3.6 * distance_m / (n_frames * frame_interval)


# -- line crossing ------------------------------------------------------------

@dataclass(frozen=True)
class LineCrossing:
    track_id: int
    frame_index: int
    from_side: int
    to_side: int
    displacement: tuple[float, float]

    @property
    def direction(self) -> str:
        dx, dy = self.displacement
        if abs(dy) >= abs(dx):
            return "downward" if dy > 0 else "upward"
        return "rightward" if dx > 0 else "leftward"


def crossing_sides(prev: Point, cur: Point, line: Segment) -> Optional[tuple[int, int]]:
    """Side transition when the motion ``prev -> cur`` crosses ``line``.

    Half-open: ``prev`` must lie strictly on one side; ``cur`` may be on the
    opposite side or exactly on the line. With ``cur`` strictly off the line
    this is the proper-intersection test. Sides are orientation signs of the
    point relative to the directed line.
    """
    a, b = line
    s0 = orientation(a, b, prev)
    s1 = orientation(a, b, cur)
    if s0 == 0 or s0 * s1 > 0:
        return None
    if orientation(prev, cur, a) * orientation(prev, cur, b) >= 0:
        return None
    return (s0, s1)


class TrackRecord:
    """Engine-side history of one track."""

    def __init__(self, track_id: int, t_vote: int = T_VOTE) -> None:
        self.track_id = track_id
        self.confirmed = False
        self.frames: list[int] = []
        self.points: list[Point] = []
        self.confidence = 0.0
        self.fired: set[ViolationClass] = set()
        self.ww_streak = 0
        self.zone_entries: list[tuple[tuple[int, str], int, int]] = []
        self.last_zone: Optional[tuple[int, str]] = None
        self.pending_uturn: Optional[tuple[int, int, tuple[int, str]]] = None
        self.speed_start: Optional[int] = None
        self.ballot = PlateBallot(track_id, capacity=t_vote)

    def add(self, frame_index: int, point: Point, confidence: float) -> None:
        self.frames.append(frame_index)
        self.points.append(point)
        self.confidence = confidence

    @property
    def point(self) -> Point:
        return self.points[-1]

    @property
    def frame_index(self) -> int:
        return self.frames[-1]

    def motion(self, window: int) -> Optional[tuple[float, float]]:
        """Mean displacement per frame over observed points within the last ``window`` frames."""
        if len(self.points) < 2:
            return None
        lo = self.frames[-1] - window
        k = len(self.frames) - 1
        while k > 0 and self.frames[k - 1] >= lo:
            k -= 1
        if k == len(self.frames) - 1:
            k -= 1
        span = self.frames[-1] - self.frames[k]
        p0, p1 = self.points[k], self.points[-1]
        return ((p1[0] - p0[0]) / span, (p1[1] - p0[1]) / span)


def crossed_line(record: TrackRecord, line: Segment) -> Optional[LineCrossing]:
    """Crossing of ``line`` between the track's two most recent observed points."""
    if len(record.points) < 2:
        return None
    prev, cur = record.points[-2], record.points[-1]
    sides = crossing_sides(prev, cur, line)
    if sides is None:
        return None
    return LineCrossing(record.track_id, record.frame_index, sides[0], sides[1],
                        (cur[0] - prev[0], cur[1] - prev[1]))


# -- predicates ---------------------------------------------------------------

def _draft(record: TrackRecord, cls: ViolationClass, frame: DetectionFrame, confidence: float,
           speed: Optional[float] = None, motion: tuple[float, float] = (0.0, 0.0)) -> ViolationEvent:
    return ViolationEvent(
        event_id=0, violation_class=cls, track_id=record.track_id, frame_index=frame.frame_index,
        t_capture=frame.t_capture, t_mono_detect=frame.t_mono, confidence=min(1.0, max(0.0, confidence)),
        speed_kmh=speed, location=record.point, motion=motion,
    )


def _is_halted(record: TrackRecord, hold_frames: int, eps: float) -> bool:
    lo = record.frame_index - hold_frames
    if not record.frames or record.frames[0] > lo:
        return False
    cur = record.point
    for f, p in zip(reversed(record.frames), reversed(record.points)):
        if f < lo:
            break
        if math.hypot(p[0] - cur[0], p[1] - cur[1]) >= eps:
            return False
    return True


def check_signal_jump(record: TrackRecord, zones: ZoneSet, frame: DetectionFrame,
                      config: ViolationConfig) -> Optional[ViolationEvent]:
    if zones.stop_line is None or frame.signal_phase is not SignalPhase.RED:
        return None
    if ViolationClass.SIGNAL_JUMP not in record.fired:
        c = crossed_line(record, zones.stop_line)
        if c is not None and dot(c.displacement, zones.lane_vector) > 0:
            return _draft(record, ViolationClass.SIGNAL_JUMP, frame, record.confidence)
    if (zones.zebra is not None and ViolationClass.ZEBRA_BREACH not in record.fired
            and ViolationClass.SIGNAL_JUMP not in record.fired
            and zones.zebra.contains(record.point)
            and _is_halted(record, config.hold_frames, config.stop_eps_px)):
        return _draft(record, ViolationClass.ZEBRA_BREACH, frame, record.confidence)
    return None


def check_wrong_way(record: TrackRecord, zones: ZoneSet, frame: DetectionFrame,
                    config: ViolationConfig) -> Optional[ViolationEvent]:
    """Updates the persistence streak; fires once the streak reaches ``persist_frames``."""
    if ViolationClass.WRONG_WAY in record.fired:
        return None
    v = record.motion(config.wrong_way_window)
    n = zones.lane_vector
    against = (v is not None and dot(v, n) < 0 and math.hypot(*v) > config.min_motion_px
               and zones.in_lane(record.point))
    record.ww_streak = record.ww_streak + 1 if against else 0
    if record.ww_streak < config.persist_frames:
        return None
    lo = record.frame_index - config.wrong_way_window
    steps = [(b[0] - a[0], b[1] - a[1])
             for fa, a, b in zip(record.frames, record.points, record.points[1:]) if fa >= lo]
    conf = sum(1 for s in steps if dot(s, n) < 0) / len(steps) if steps else 0.0
    return _draft(record, ViolationClass.WRONG_WAY, frame, conf, motion=v)


def _point_at_or_before(record: TrackRecord, frame_index: int) -> Point:
    k = int(np.searchsorted(record.frames, frame_index, side="right")) - 1
    return record.points[max(k, 0)]


def _point_at(record: TrackRecord, frame_index: int) -> Point:
    k = int(np.searchsorted(record.frames, frame_index, side="left"))
    return record.points[min(k, len(record.points) - 1)]


def check_uturn(record: TrackRecord, zones: ZoneSet, frame: DetectionFrame, config: ViolationConfig,
                frame_rate: float) -> Optional[ViolationEvent]:
    if not zones.divider_zones or ViolationClass.ILLEGAL_UTURN in record.fired:
        return None
    zone = None
    for idx, dz in enumerate(zones.divider_zones):
        name = dz.zone_of(record.point)
        if name is not None:
            zone = (idx, name)
            break
    if zone is not None and zone != record.last_zone:
        record.zone_entries.append((zone, record.frame_index, len(record.points) - 1))
        del record.zone_entries[:-3]
    record.last_zone = zone if zone is not None else record.last_zone

    if record.pending_uturn is None and len(record.zone_entries) == 3 and zone is not None:
        (z0, f0, _), (z1, _, _), (z2, f2, _) = record.zone_entries
        same = z0[0] == z1[0] == z2[0]
        names = z0[1] + z1[1] + z2[1]
        if same and names in ("ABC", "CBA") and zone == z2 and f2 == record.frame_index:
            if (f2 - f0) / frame_rate <= config.uturn_window_s:
                record.pending_uturn = (f0, f2, z2)

    if record.pending_uturn is None:
        return None
    f0, f2, final_zone = record.pending_uturn
    left = zone != final_zone
    if not left and record.frame_index - f2 < config.uturn_exit_frames:
        return None
    record.pending_uturn = None
    entry_from = _point_at_or_before(record, f0 - config.uturn_entry_frames)
    entry_to = _point_at(record, f0)
    exit_from = _point_at(record, f2)
    exit_to = record.point
    v_in = (entry_to[0] - entry_from[0], entry_to[1] - entry_from[1])
    v_out = (exit_to[0] - exit_from[0], exit_to[1] - exit_from[1])
    angle = angle_between_deg(v_in, v_out)
    if angle < config.uturn_min_heading_deg:
        return None
    return _draft(record, ViolationClass.ILLEGAL_UTURN, frame, record.confidence,
                  motion=record.motion(config.wrong_way_window) or (0.0, 0.0))


def check_speed(record: TrackRecord, zones: ZoneSet, frame: DetectionFrame, config: ViolationConfig,
                frame_rate: float) -> tuple[Optional[SpeedCrossing], Optional[ViolationEvent]]:
    """Returns the completed measurement (if any) and the SPEEDING event (if over the limit)."""
    lines = zones.speed_lines
    if lines is None:
        return None, None
    n = zones.lane_vector
    c = crossed_line(record, lines.start)
    if c is not None and dot(c.displacement, n) > 0:
        record.speed_start = c.frame_index
    c = crossed_line(record, lines.stop)
    if c is None or dot(c.displacement, n) <= 0 or record.speed_start is None:
        return None, None
    if c.frame_index <= record.speed_start:
        return None, None
    m = SpeedCrossing(record.track_id, record.speed_start, c.frame_index, 1.0 / frame_rate, lines.distance_m)
    record.speed_start = None
    v = m.speed_kmh
    if v <= config.speed_limit_kmh:
        return m, None
    return m, _draft(record, ViolationClass.SPEEDING, frame, record.confidence, speed=v,
                     motion=record.motion(config.wrong_way_window) or (0.0, 0.0))


# -- engine -------------------------------------------------------------------

@dataclass(frozen=True)
class TrackSnapshot:
    """One live track on one frame, as handed from the tracking stage."""

    track_id: int
    confirmed: bool
    point: Point
    observed: bool
    confidence: float = 1.0
    plate: Optional[PlateReading] = None


def log_delay_us(seed: int, event_id: int, median_ms: float, p95_ms: float) -> int:
    """Seeded lognormal on-device delay; a pure function of (seed, event_id)."""
    rng = np.random.default_rng([seed, event_id])
    sigma = (math.log(p95_ms) - math.log(median_ms)) / 1.6448536269514722
    return int(round(1000.0 * median_ms * math.exp(sigma * rng.standard_normal())))


class ViolationEngine:
    """Sequential per-camera violation reasoning."""

    def __init__(self, config: ViolationConfig | None = None, frame_rate: float = 30.0,
                 grammar: PlateGrammar = DEFAULT_GRAMMAR, seed: int = 0) -> None:
        self.config = config or ViolationConfig()
        self.frame_rate = frame_rate
        self.grammar = grammar
        self.seed = seed
        self.zones: Optional[ZoneSet] = None
        self.records: dict[int, TrackRecord] = {}
        self.retired: list[TrackRecord] = []
        self.speed_measurements: list[SpeedCrossing] = []
        self.events: list[ViolationEvent] = []
        self._next_event = 1

    def set_zones(self, zones: ZoneSet) -> None:
        self.zones = zones

    def displacements(self) -> list[tuple[Point, Point]]:
        """First/last observed point of every confirmed track seen so far (lane-sign evidence)."""
        out = []
        for rec in list(self.retired) + list(self.records.values()):
            if rec.confirmed and len(rec.points) >= 2:
                out.append((rec.points[0], rec.points[-1]))
        return out

    def step(self, frame: DetectionFrame, snapshots: Sequence[TrackSnapshot],
             deleted: Iterable[int] = ()) -> list[ViolationEvent]:
        cfg = self.config
        out: list[ViolationEvent] = []
        for snap in sorted(snapshots, key=lambda s: s.track_id):
            rec = self.records.get(snap.track_id)
            if rec is None:
                rec = self.records[snap.track_id] = TrackRecord(snap.track_id, cfg.t_vote)
            rec.confirmed = snap.confirmed
            if snap.plate is not None:
                rec.ballot.add(snap.plate.text, snap.plate.confidence, frame.frame_index)
            if not snap.observed:
                continue
            rec.add(frame.frame_index, snap.point, snap.confidence)
            if self.zones is None or not rec.confirmed:
                continue
            for ev in self._evaluate(rec, frame):
                out.append(self._finalize(rec, ev))
        for tid in deleted:
            rec = self.records.pop(tid, None)
            if rec is not None:
                rec.speed_start = None
                rec.pending_uturn = None
                # retired tracks only matter as lane-direction evidence during calibration
                if self.zones is None:
                    self.retired.append(rec)
        self.events.extend(out)
        return out

    def _evaluate(self, rec: TrackRecord, frame: DetectionFrame) -> list[ViolationEvent]:
        zones, cfg = self.zones, self.config
        found = []
        ev = check_signal_jump(rec, zones, frame, cfg)
        if ev is not None:
            found.append(ev)
        ev = check_wrong_way(rec, zones, frame, cfg)
        if ev is not None:
            found.append(ev)
        ev = check_uturn(rec, zones, frame, cfg, self.frame_rate)
        if ev is not None:
            found.append(ev)
        m, ev = check_speed(rec, zones, frame, cfg, self.frame_rate)
        if m is not None:
            self.speed_measurements.append(m)
        if ev is not None:
            found.append(ev)
        return found

    def _finalize(self, rec: TrackRecord, ev: ViolationEvent) -> ViolationEvent:
        if ev.violation_class is not ViolationClass.SPEEDING:
            rec.fired.add(ev.violation_class)
        eid = self._next_event
        self._next_event += 1
        decided = vote(rec.ballot, self.grammar, self.config.min_readings)
        delay = log_delay_us(self.seed, eid, self.config.log_delay_median_ms, self.config.log_delay_p95_ms)
        return replace(ev, event_id=eid, t_mono_detect=ev.t_mono_detect + delay,
                       plate_best=decided[0] if decided else None)


# -- evaluation ---------------------------------------------------------------

@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def fp_rate(self) -> float:
        """False events over all emitted events."""
        return 0.0 if self.tp + self.fp == 0 else self.fp / (self.tp + self.fp)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "fp_rate": self.fp_rate}


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    overall: ClassMetrics
    speed_mae_kmh: Optional[float] = None
    speed_errors: list[tuple[str, float, float, int]] = field(default_factory=list)
    speed_missed: list[str] = field(default_factory=list)
    plate_accuracy: Optional[float] = None
    matches: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_class": {k: v.to_dict() for k, v in sorted(self.per_class.items())},
            "overall": self.overall.to_dict(),
            "speed_mae_kmh": self.speed_mae_kmh,
            "speed_measured": len(self.speed_errors),
            "speed_missed": list(self.speed_missed),
            "plate_accuracy": self.plate_accuracy,
        }


def _key(cls: str, aggregate: bool) -> str:
    return AGGREGATE_KEYS.get(cls, cls) if aggregate else cls


def _gap(frame: int, span: tuple[int, int]) -> int:
    lo, hi = span
    return 0 if lo <= frame <= hi else min(abs(frame - lo), abs(frame - hi))


def evaluate(events: Sequence[ViolationEvent], ground_truth: Sequence[GroundTruth], slack_frames: int = 15,
             aggregate: bool = True, speeds: Sequence[SpeedCrossing] = ()) -> EvalReport:
    """Event-level precision/recall per class plus speed MAE and voted-plate accuracy.

    An event matches a truth when their (aggregated) classes agree and the
    event frame lies within the truth span widened by ``slack_frames``.
    Matching is one-to-one and greedy by frame gap, ties by event id.
    Empty events against empty truth give precision = recall = 1.
    """
    truths = [(i, g) for i, g in enumerate(ground_truth) if g.violation_class != SPEED_TRUTH]
    candidates = []
    for ev in events:
        k = _key(ev.violation_class.value, aggregate)
        for i, g in truths:
            if _key(g.violation_class, aggregate) != k:
                continue
            gap = _gap(ev.frame_index, g.span)
            if gap <= slack_frames:
                candidates.append((gap, ev.event_id, i))
    candidates.sort()
    used_ev: set[int] = set()
    used_gt: set[int] = set()
    pairs: list[tuple[ViolationEvent, GroundTruth]] = []
    by_id = {ev.event_id: ev for ev in events}
    for _, eid, i in candidates:
        if eid in used_ev or i in used_gt:
            continue
        used_ev.add(eid)
        used_gt.add(i)
        pairs.append((by_id[eid], ground_truth[i]))

    keys = sorted({_key(ev.violation_class.value, aggregate) for ev in events}
                  | {_key(g.violation_class, aggregate) for _, g in truths})
    per_class = {}
    for k in keys:
        tp = sum(1 for ev, _ in pairs if _key(ev.violation_class.value, aggregate) == k)
        n_ev = sum(1 for ev in events if _key(ev.violation_class.value, aggregate) == k)
        n_gt = sum(1 for _, g in truths if _key(g.violation_class, aggregate) == k)
        per_class[k] = ClassMetrics(tp, n_ev - tp, n_gt - tp)
    overall = ClassMetrics(len(pairs), len(events) - len(pairs), len(truths) - len(pairs))

    plate_hits = [ev.plate_best == g.plate for ev, g in pairs if g.plate is not None]
    plate_acc = sum(plate_hits) / len(plate_hits) if plate_hits else None

    speed_errors, missed = _match_speeds(speeds, ground_truth, slack_frames)
    mae = float(np.mean([abs(e[1] - e[2]) for e in speed_errors])) if speed_errors else None
    return EvalReport(per_class, overall, mae, speed_errors, missed, plate_acc,
                      [(ev.event_id, g.label) for ev, g in pairs])


def _match_speeds(speeds: Sequence[SpeedCrossing], ground_truth: Sequence[GroundTruth], slack: int
                  ) -> tuple[list[tuple[str, float, float, int]], list[str]]:
    truths = [g for g in ground_truth if g.speed_kmh is not None]
    candidates = []
    for j, m in enumerate(speeds):
        for i, g in enumerate(truths):
            d0, d1 = abs(m.start_frame - g.span[0]), abs(m.stop_frame - g.span[1])
            if d0 <= slack and d1 <= slack:
                candidates.append((d0 + d1, j, i))
    candidates.sort()
    used_m: set[int] = set()
    used_g: set[int] = set()
    out = []
    for _, j, i in candidates:
        if j in used_m or i in used_g:
            continue
        used_m.add(j)
        used_g.add(i)
        out.append((truths[i].label, speeds[j].speed_kmh, float(truths[i].speed_kmh), speeds[j].n))
    out.sort()
    missed = sorted(g.label for i, g in enumerate(truths) if i not in used_g)
    return out, missed

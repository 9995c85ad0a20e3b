"""Per-camera dataflow: trace -> tracking -> zones -> violations -> v2x.

Each stage is an object with a ``process`` method. The single-threaded
driver chains them directly; the pipelined driver runs each on its own
thread joined by bounded FIFO queues. Stage state is owned by exactly one
thread and items are immutable once handed on, so both drivers produce
identical logs.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import queue
import statistics
import threading
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from .errors import RnodeError, StageError, TransportDown
from .plate import DEFAULT_GRAMMAR, PlateGrammar
from .roi import RoiConfig, ZoneSet, derive_zones
from .tracker import Tracker, TrackerConfig, bottom_center
from .trace import (STATIC_CLASSES, Detection, DetectionFrame, GroundTruth, ObjectClass, PlateReading, Scenario,
                    gt_path_for, iter_trace, read_ground_truth)
from .v2x.gate import GateConfig, GateDecision, GateState
from .v2x.latency import LatencyReport, LatencySample, latency_report
from .v2x.message import GeoConfig, to_safety_message
from .v2x.transport import SimulatedTransport, Transport, delay_from_config
from .violations import (EvalReport, SpeedCrossing, TrackSnapshot, ViolationConfig, ViolationEngine,
                         ViolationEvent, evaluate)

log = logging.getLogger(__name__)

STAGES = ("ingest", "tracking", "roi", "violations", "v2x")
SALT_ENV = "RNODE_SALT"


# -- configuration --------------------------------------------------------------

@dataclass
class CameraConfig:
    cam_id: str = "CAM-01"
    roi_id: str = "ROI-01"
    lat: float = 12.9716
    lon: float = 77.5946
    px_per_m: float = 10.0
    origin_px: tuple[float, float] = (0.0, 0.0)
    bearing_deg: float = 0.0
    frame_dims: Optional[tuple[int, int]] = None
    evidence_uri_template: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.px_per_m > 0:
            raise ValueError("camera.px_per_m must be > 0")


@dataclass
class TransportConfig:
    kind: str = "sim"
    node_to_broker: dict = field(default_factory=lambda: {"kind": "lognormal", "median_ms": 12.0, "p95_ms": 22.0})
    broker_to_endpoint: dict = field(default_factory=lambda: {"kind": "lognormal", "median_ms": 8.0, "p95_ms": 15.0})
    drop_prob: float = 0.0
    duplicate_prob: float = 0.0
    max_attempts: int = 3
    backoff_ms: float = 50.0
    endpoints: tuple[str, ...] = ("RSU-1", "OBU-1")
    clock_offsets_ms: dict = field(default_factory=dict)
    mqtt: dict = field(default_factory=dict)


@dataclass
class PipelineConfig:
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    roi: RoiConfig = field(default_factory=RoiConfig)
    violations: ViolationConfig = field(default_factory=ViolationConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    grammar: PlateGrammar = DEFAULT_GRAMMAR
    salt: Optional[bytes] = None
    seed: int = 0
    v2x_enabled: bool = True
    pipelined: bool = False
    queue_size: int = 64
    slack_frames: int = 15

    def __post_init__(self) -> None:
        if self.queue_size < 1:
            raise ValueError("queue_size must be >= 1")

    @property
    def speed_limit_kmh(self) -> float:
        return self.violations.speed_limit_kmh

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)

        def sub(klass, key):
            data = dict(raw.pop(key, {}) or {})
            for f in dataclasses.fields(klass):
                if f.name in data and isinstance(data[f.name], list):
                    data[f.name] = tuple(data[f.name])
            return klass(**data)

        kwargs: dict[str, Any] = {
            "tracker": sub(TrackerConfig, "tracker"),
            "roi": sub(RoiConfig, "roi"),
            "violations": sub(ViolationConfig, "violations"),
            "gate": sub(GateConfig, "gate"),
            "transport": sub(TransportConfig, "transport"),
            "camera": sub(CameraConfig, "camera"),
        }
        if "speed_limit_kmh" in raw:
            kwargs["violations"] = dataclasses.replace(kwargs["violations"],
                                                       speed_limit_kmh=float(raw.pop("speed_limit_kmh")))
        if "grammar" in raw:
            kwargs["grammar"] = PlateGrammar.from_dict(raw.pop("grammar"))
        if raw.get("salt") is not None:
            salt = raw.pop("salt")
            kwargs["salt"] = bytes.fromhex(salt["hex"]) if isinstance(salt, dict) else str(salt).encode("utf-8")
        else:
            raw.pop("salt", None)
        raw.pop("report_paths", None)
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(raw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def resolve_salt(config: PipelineConfig) -> tuple[bytes, str]:
    """``RNODE_SALT`` overrides the config salt; without either a random salt is drawn."""
    env = os.environ.get(SALT_ENV)
    if env:
        return env.encode("utf-8"), "env"
    if config.salt is not None:
        return bytes(config.salt), "config"
    warnings.warn("no salt configured; using a random per-run salt, plate hashes will not be reproducible",
                  RuntimeWarning, stacklevel=2)
    return os.urandom(32), "random"


def build_transport(config: PipelineConfig, deadletter_path: Optional[Path]) -> Transport:
    tc = config.transport
    if tc.kind == "sim":
        return SimulatedTransport(
            node_to_broker=delay_from_config(tc.node_to_broker),
            broker_to_endpoint=delay_from_config(tc.broker_to_endpoint),
            drop_prob=tc.drop_prob, duplicate_prob=tc.duplicate_prob, seed=config.seed,
            max_attempts=tc.max_attempts, backoff_ms=tc.backoff_ms, endpoints=tc.endpoints,
            clock_offsets_us={k: int(round(v * 1000)) for k, v in tc.clock_offsets_ms.items()},
            deadletter_path=deadletter_path,
        )
    if tc.kind == "mqtt":
        from .v2x.mqtt import MqttConfig, MqttTransport

        return MqttTransport(MqttConfig(**tc.mqtt), deadletter_path=deadletter_path)
    raise ValueError(f"unknown transport kind {tc.kind!r}")


# -- stage items ----------------------------------------------------------------

@dataclass(frozen=True)
class FrameBundle:
    frame: DetectionFrame
    snapshots: tuple[TrackSnapshot, ...]
    deleted: tuple[int, ...]


@dataclass(frozen=True)
class AnalysisResult:
    frame: DetectionFrame
    events: tuple[ViolationEvent, ...]


@dataclass(frozen=True)
class MessageRecord:
    event_id: int
    decision: GateDecision
    topic: str
    payload: dict
    t_gate: int
    receipt: Optional[dict] = None

    def to_json(self) -> str:
        rec = {"event_id": self.event_id, "decision": self.decision.value, "topic": self.topic,
               "t_gate_us": self.t_gate, "payload": self.payload}
        if self.receipt is not None:
            rec["delivery"] = self.receipt
        return json.dumps(rec, separators=(",", ":"))


# -- stages ---------------------------------------------------------------------

def assign_plates(frame: DetectionFrame, matches: dict[int, Detection]) -> dict[int, PlateReading]:
    """Each plate goes to the smallest matched vehicle box containing its centre."""
    out: dict[int, PlateReading] = {}
    for det in frame.detections:
        if det.class_id is not ObjectClass.LICENSE_PLATE or det.plate_reading is None:
            continue
        cx, cy = det.center
        best = None
        for tid, vd in matches.items():
            x, y, w, h = vd.bbox
            if x <= cx <= x + w and y <= cy <= y + h:
                key = (w * h, tid)
                if best is None or key < best[0]:
                    best = (key, tid)
        if best is None:
            continue
        tid = best[1]
        if tid not in out or det.plate_reading.confidence > out[tid].confidence:
            out[tid] = det.plate_reading
    return out


class TrackingStage:
    name = "tracking"

    def __init__(self, config: PipelineConfig) -> None:
        self.tracker = Tracker(config.tracker)

    def process(self, frame: DetectionFrame) -> FrameBundle:
        tracks = self.tracker.step(frame)
        matches = self.tracker.last_matches
        plates = assign_plates(frame, matches)
        snaps = []
        for trk in tracks:
            det = matches.get(trk.track_id)
            if det is not None:
                snaps.append(TrackSnapshot(trk.track_id, trk.is_confirmed, bottom_center(det.bbox), True,
                                           det.confidence, plates.get(trk.track_id)))
            else:
                snaps.append(TrackSnapshot(trk.track_id, trk.is_confirmed, bottom_center(trk.predicted_bbox()),
                                           False, 0.0, None))
        return FrameBundle(frame, tuple(snaps), tuple(t.track_id for t in self.tracker.last_deleted))


class AnalysisStage:
    """Zone calibration followed by violation reasoning."""

    name = "violations"

    def __init__(self, config: PipelineConfig, frame_rate: float, frame_dims: tuple[int, int],
                 zones: Optional[ZoneSet] = None) -> None:
        self.config = config
        self.frame_dims = frame_dims
        self.engine = ViolationEngine(config.violations, frame_rate, config.grammar, config.seed)
        self.pinned = zones is not None
        self.zones = zones
        if zones is not None:
            self.engine.set_zones(zones)
        self.static_history: list[tuple[Detection, ...]] = []
        self.seen = 0
        self.roi_ns = 0

    def _derive(self) -> None:
        t0 = time.perf_counter_ns()
        try:
            self.zones = derive_zones(self.static_history, self.config.roi, self.frame_dims,
                                      self.engine.displacements())
        except RnodeError as exc:
            raise StageError("roi", exc) from exc
        self.engine.set_zones(self.zones)
        self.static_history = []
        self.roi_ns += time.perf_counter_ns() - t0

    def process(self, bundle: FrameBundle) -> AnalysisResult:
        if not self.pinned and self.zones is None:
            t0 = time.perf_counter_ns()
            if self.seen >= self.config.roi.calibration_frames:
                self.roi_ns += time.perf_counter_ns() - t0
                self._derive()
            else:
                self.static_history.append(tuple(d for d in bundle.frame.detections if d.class_id in STATIC_CLASSES))
                self.roi_ns += time.perf_counter_ns() - t0
        self.seen += 1
        events = self.engine.step(bundle.frame, bundle.snapshots, bundle.deleted)
        return AnalysisResult(bundle.frame, tuple(events))

    def finish_calibration(self) -> Optional[ZoneSet]:
        """Derive zones from whatever was collected (for commissioning on short traces)."""
        if self.zones is None and any(self.static_history):
            self._derive()
        return self.zones


class V2xStage:
    name = "v2x"

    def __init__(self, config: PipelineConfig, salt: bytes, transport: Transport, frame_rate: float) -> None:
        cam = config.camera
        self.config = config
        self.salt = salt
        self.transport = transport
        self.geo = GeoConfig(cam.lat, cam.lon, cam.px_per_m, tuple(cam.origin_px), cam.bearing_deg, frame_rate)
        self.gate = GateState(config.gate)
        self.clock: Optional[int] = None
        self.samples: list[LatencySample] = []
        self.dead_letters = 0

    def process(self, result: AnalysisResult) -> tuple[MessageRecord, ...]:
        cam = self.config.camera
        out = []
        for ev in result.events:
            uri = cam.evidence_uri_template.format(event_id=ev.event_id, cam_id=cam.cam_id) \
                if cam.evidence_uri_template else None
            msg = to_safety_message(ev, self.geo, self.salt, cam.cam_id, cam.roi_id, uri)
            # the gate stage clock never runs backwards even if log delays reorder events
            now = ev.t_mono_detect if self.clock is None else max(self.clock, ev.t_mono_detect)
            self.clock = now
            decision = self.gate.offer(msg, now)
            receipt = None
            if decision is GateDecision.FORWARD:
                try:
                    r = self.transport.publish(msg, ev.event_id, now)
                except TransportDown:
                    self.dead_letters += 1
                    receipt = {"status": "DEAD_LETTER"}
                else:
                    receipt = {"status": "DELIVERED", "attempts": r.attempts, "t_publish_us": r.t_publish,
                               "t_broker_us": r.t_broker, "t_endpoint_us": r.t_endpoint}
                    self.samples.append(LatencySample(ev.event_id, result.frame.t_mono, ev.t_mono_detect,
                                                      r.t_publish, r.t_broker, r.t_endpoint))
            out.append(MessageRecord(ev.event_id, decision, msg.topic(), msg.to_dict(), now, receipt))
        return tuple(out)


# -- run ------------------------------------------------------------------------

@dataclass
class RunReport:
    frames: int = 0
    events: int = 0
    events_by_class: dict = field(default_factory=dict)
    evaluation: Optional[dict] = None
    speed_mae_kmh: Optional[float] = None
    speed_measurements: int = 0
    plate_accuracy: Optional[float] = None
    throughput_fps: float = 0.0
    latency: Optional[LatencyReport] = None
    gate_counts: dict = field(default_factory=dict)
    dead_letters: int = 0
    stage_us_per_frame: dict = field(default_factory=dict)
    zones_derived: bool = False
    salt_source: str = "config"

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "events": self.events,
            "events_by_class": dict(sorted(self.events_by_class.items())),
            "evaluation": self.evaluation,
            "speed_mae_kmh": self.speed_mae_kmh,
            "speed_measurements": self.speed_measurements,
            "plate_accuracy": self.plate_accuracy,
            "throughput_fps": self.throughput_fps,
            "latency": self.latency.to_dict() if self.latency else None,
            "gate_counts": dict(self.gate_counts),
            "dead_letters": self.dead_letters,
            "stage_us_per_frame": dict(self.stage_us_per_frame),
            "zones_derived": self.zones_derived,
            "salt_source": self.salt_source,
        }


@dataclass
class RunResult:
    report: RunReport
    events: list[ViolationEvent]
    event_lines: list[str]
    message_lines: list[str]
    speeds: list[SpeedCrossing]
    zones: Optional[ZoneSet]
    eval_report: Optional[EvalReport] = None
    samples: list[LatencySample] = field(default_factory=list)
    transport: Optional[Transport] = None


class _Source:
    """Frames plus header metadata from a trace path or an in-memory scenario."""

    def __init__(self, source) -> None:
        self.ground_truth: tuple[GroundTruth, ...] = ()
        if isinstance(source, Scenario):
            self.frame_rate = float(source.frame_rate)
            self.frame_dims = tuple(source.frame_dims)
            self.ground_truth = source.ground_truth
            self._frames: Iterable[DetectionFrame] = source.frames
            self._header_known = True
        else:
            self.path = Path(source)
            it = iter_trace(self.path)
            first = next(it, None)
            self.frame_rate, self.frame_dims = 30.0, (0, 0)
            head: list[DetectionFrame] = []
            if first is not None:
                header, frame = first
                self.frame_rate = float(header["frame_rate"])
                self.frame_dims = (int(header["width"]), int(header["height"]))
                if frame is not None:
                    head.append(frame)
            gt_file = gt_path_for(self.path)
            if gt_file.exists():
                self.ground_truth = read_ground_truth(gt_file)
            self._frames = _chain(head, (f for _, f in it if f is not None))

    def frames(self) -> Iterator[DetectionFrame]:
        return iter(self._frames)


def _chain(head: list, rest: Iterator) -> Iterator:
    yield from head
    yield from rest


_END = object()


class _Failure:
    def __init__(self, stage: str, exc: BaseException) -> None:
        self.stage = stage
        self.exc = exc


def _as_stage_error(stage: str, exc: BaseException) -> StageError:
    return exc if isinstance(exc, StageError) else StageError(stage, exc)


class _Runner:
    def __init__(self, source: _Source, config: PipelineConfig, salt: bytes, zones: Optional[ZoneSet],
                 transport: Optional[Transport], realtime: bool) -> None:
        self.source = source
        self.config = config
        self.realtime = realtime
        dims = tuple(config.camera.frame_dims) if config.camera.frame_dims else source.frame_dims
        self.tracking = TrackingStage(config)
        self.analysis = AnalysisStage(config, source.frame_rate, dims, zones)
        self.v2x = V2xStage(config, salt, transport, source.frame_rate) if config.v2x_enabled else None
        self.salt = salt
        self.ns = {s: 0 for s in STAGES}
        self.frames = 0
        self.event_lines: list[str] = []
        self.message_lines: list[str] = []
        self.events: list[ViolationEvent] = []

    # each callable below runs on exactly one thread

    def _ingest(self) -> Iterator[DetectionFrame]:
        it = self.source.frames()
        t_start = time.monotonic()
        first_mono = None
        while True:
            t0 = time.perf_counter_ns()
            frame = next(it, None)
            self.ns["ingest"] += time.perf_counter_ns() - t0
            if frame is None:
                return
            if self.realtime:
                first_mono = frame.t_mono if first_mono is None else first_mono
                delay = (frame.t_mono - first_mono) / 1e6 - (time.monotonic() - t_start)
                if delay > 0:
                    time.sleep(delay)
            yield frame

    def _track(self, frame: DetectionFrame) -> FrameBundle:
        t0 = time.perf_counter_ns()
        try:
            return self.tracking.process(frame)
        except RnodeError as exc:
            raise StageError("tracking", exc) from exc
        finally:
            self.ns["tracking"] += time.perf_counter_ns() - t0

    def _analyse(self, bundle: FrameBundle) -> AnalysisResult:
        t0 = time.perf_counter_ns()
        roi0 = self.analysis.roi_ns
        try:
            return self.analysis.process(bundle)
        except StageError:
            raise
        except RnodeError as exc:
            raise StageError("violations", exc) from exc
        finally:
            total = time.perf_counter_ns() - t0
            roi = self.analysis.roi_ns - roi0
            self.ns["roi"] += roi
            self.ns["violations"] += total - roi

    def _publish(self, result: AnalysisResult) -> tuple[AnalysisResult, tuple[MessageRecord, ...]]:
        if self.v2x is None:
            return result, ()
        t0 = time.perf_counter_ns()
        try:
            return result, self.v2x.process(result)
        except RnodeError as exc:
            raise StageError("v2x", exc) from exc
        finally:
            self.ns["v2x"] += time.perf_counter_ns() - t0

    def _sink(self, item: tuple[AnalysisResult, tuple[MessageRecord, ...]]) -> None:
        result, records = item
        self.frames += 1
        for ev in result.events:
            self.events.append(ev)
            self.event_lines.append(ev.to_json(self.salt))
        for rec in records:
            self.message_lines.append(rec.to_json())

    def run_sequential(self) -> None:
        for frame in self._ingest():
            self._sink(self._publish(self._analyse(self._track(frame))))

    def run_pipelined(self) -> None:
        size = self.config.queue_size
        abort = threading.Event()
        q_in: queue.Queue = queue.Queue(size)
        q_trk: queue.Queue = queue.Queue(size)
        q_ana: queue.Queue = queue.Queue(size)
        q_out: queue.Queue = queue.Queue(size)

        def put(q: queue.Queue, item) -> bool:
            while not abort.is_set():
                try:
                    q.put(item, timeout=0.05)
                    return True
                except queue.Full:
                    continue
            return False

        def reader() -> None:
            try:
                for frame in self._ingest():
                    if not put(q_in, frame):
                        return
                put(q_in, _END)
            except BaseException as exc:  # forwarded to the consumer thread
                put(q_in, _Failure("ingest", exc))

        def worker(fn, src: queue.Queue, dst: queue.Queue, stage: str) -> None:
            while True:
                item = src.get()
                if item is _END or isinstance(item, _Failure):
                    put(dst, item)
                    return
                try:
                    out = fn(item)
                except BaseException as exc:
                    put(dst, _Failure(stage, exc))
                    return
                if not put(dst, out):
                    return

        threads = [
            threading.Thread(target=reader, name="rnode-ingest", daemon=True),
            threading.Thread(target=worker, args=(self._track, q_in, q_trk, "tracking"), name="rnode-track",
                             daemon=True),
            threading.Thread(target=worker, args=(self._analyse, q_trk, q_ana, "violations"), name="rnode-analyse",
                             daemon=True),
            threading.Thread(target=worker, args=(self._publish, q_ana, q_out, "v2x"), name="rnode-v2x", daemon=True),
        ]
        for t in threads:
            t.start()
        failure: Optional[_Failure] = None
        try:
            while True:
                item = q_out.get()
                if item is _END:
                    break
                if isinstance(item, _Failure):
                    failure = item
                    break
                self._sink(item)
        finally:
            abort.set()
            for t in threads:
                t.join(timeout=5.0)
        if failure is not None:
            raise _as_stage_error(failure.stage, failure.exc) from failure.exc


def run(source, config: PipelineConfig | None = None, out_dir: Optional[str | Path] = None,
        zones: Optional[ZoneSet] = None, realtime: bool = False, transport: Optional[Transport] = None) -> RunResult:
    """Process a trace (path or in-memory :class:`Scenario`) end to end.

    With ``out_dir`` the run writes ``events.jsonl``, ``messages.jsonl``,
    ``deadletter.jsonl`` (only when something was dead-lettered) and
    ``report.json``.
    """
    config = config or PipelineConfig()
    salt, salt_source = resolve_salt(config)
    out = Path(out_dir) if out_dir is not None else None
    deadletter = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        deadletter = out / "deadletter.jsonl"
        if deadletter.exists():
            deadletter.unlink()
    try:
        src = _Source(source)
    except RnodeError as exc:
        raise StageError("ingest", exc) from exc
    if transport is None and config.v2x_enabled:
        transport = build_transport(config, deadletter)

    runner = _Runner(src, config, salt, zones, transport, realtime)
    t0 = time.perf_counter()
    try:
        if config.pipelined:
            runner.run_pipelined()
        else:
            try:
                runner.run_sequential()
            except StageError:
                raise
            except RnodeError as exc:
                raise StageError("ingest", exc) from exc
    finally:
        if transport is not None:
            transport.close()
    elapsed = time.perf_counter() - t0

    engine = runner.analysis.engine
    report = RunReport(frames=runner.frames, events=len(runner.events), salt_source=salt_source,
                       zones_derived=runner.analysis.zones is not None and not runner.analysis.pinned)
    for ev in runner.events:
        report.events_by_class[ev.violation_class.value] = report.events_by_class.get(ev.violation_class.value, 0) + 1
    report.speed_measurements = len(engine.speed_measurements)
    report.throughput_fps = runner.frames / elapsed if runner.frames and elapsed > 0 else 0.0
    if runner.frames:
        report.stage_us_per_frame = {s: runner.ns[s] / 1000.0 / runner.frames for s in STAGES}
    eval_report = None
    if src.ground_truth or runner.events:
        eval_report = evaluate(runner.events, src.ground_truth, config.slack_frames, speeds=engine.speed_measurements)
        report.evaluation = eval_report.to_dict()
        report.speed_mae_kmh = eval_report.speed_mae_kmh
        report.plate_accuracy = eval_report.plate_accuracy
    samples: list[LatencySample] = []
    if runner.v2x is not None:
        samples = runner.v2x.samples
        report.gate_counts = {d.value: n for d, n in runner.v2x.gate.counts.items()}
        report.dead_letters = runner.v2x.dead_letters
        if samples:
            report.latency = latency_report(samples)

    if out is not None:
        _write_lines(out / "events.jsonl", runner.event_lines)
        _write_lines(out / "messages.jsonl", runner.message_lines)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    return RunResult(report, runner.events, runner.event_lines, runner.message_lines,
                     list(engine.speed_measurements), runner.analysis.zones, eval_report, samples, transport)


def _write_lines(path: Path, lines: Sequence[str]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def commission(source, config: PipelineConfig | None = None) -> ZoneSet:
    """Run tracking over the calibration window only and return the derived zones."""
    config = config or PipelineConfig()
    src = _Source(source)
    dims = tuple(config.camera.frame_dims) if config.camera.frame_dims else src.frame_dims
    tracking = TrackingStage(config)
    analysis = AnalysisStage(config, src.frame_rate, dims)
    for frame in src.frames():
        if analysis.seen >= config.roi.calibration_frames:
            break
        analysis.process(tracking.process(frame))
    zones = analysis.finish_calibration()
    if zones is None:
        from .errors import NoStaticFeatures

        raise StageError("roi", NoStaticFeatures("trace contains no static detections"))
    return zones


# -- bench ----------------------------------------------------------------------

@dataclass
class BenchResult:
    repetitions: int
    frames: int
    fps_mean: float
    fps_std: float
    stage_us_mean: dict[str, float]
    stage_us_std: dict[str, float]

    def table(self) -> str:
        lines = [f"{'stage':<12}{'us/frame':>12}{'std':>10}"]
        for s in STAGES:
            lines.append(f"{s:<12}{self.stage_us_mean[s]:>12.1f}{self.stage_us_std[s]:>10.1f}")
        lines.append(f"throughput {self.fps_mean:.1f} +/- {self.fps_std:.1f} frames/s over {self.repetitions} runs")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def bench(source, config: PipelineConfig | None = None, repetitions: int = 3) -> BenchResult:
    if repetitions < 3:
        raise ValueError("bench needs at least 3 repetitions")
    config = config or PipelineConfig()
    if isinstance(source, (str, Path)):
        from .trace import read_trace

        source = read_trace(source)
    fps, stages = [], {s: [] for s in STAGES}
    frames = 0
    for _ in range(repetitions):
        res = run(source, config)
        frames = res.report.frames
        fps.append(res.report.throughput_fps)
        for s in STAGES:
            stages[s].append(res.report.stage_us_per_frame.get(s, 0.0))

    def std(xs):
        return statistics.stdev(xs) if len(xs) > 1 else 0.0

    return BenchResult(repetitions, frames, statistics.fmean(fps), std(fps),
                       {s: statistics.fmean(v) for s, v in stages.items()},
                       {s: std(v) for s, v in stages.items()})

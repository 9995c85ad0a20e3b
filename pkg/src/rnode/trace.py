"""Detection-trace data model and the JSON Lines trace format.

A trace file starts with a header record followed by one record per frame::

    {"format": "rnode-trace/1", "frame_rate": 30, "width": 160, "height": 1100}
    {"i": 0, "tc": ..., "tm": ..., "phase": "GREEN", "det": [...]}

Ground truth, when present, lives next to the trace in ``<trace>.gt.json``.
Bounding boxes are ``(x, y, w, h)`` pixels with the origin at the top-left
corner of the image.
"""

from __future__ import annotations

import enum
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .errors import BBoxOutOfBounds, IoFailure, MalformedRecord, NonMonotonicTime

FORMAT_TAG = "rnode-trace/1"
BENCH_FRAME_RATES = (10, 20, 30, 40)

_PLATE_TEXT = re.compile(r"^[A-Z0-9]{1,12}$")
_NORM_TOL = 1e-6


class SignalPhase(str, enum.Enum):
    RED = "RED"
    AMBER = "AMBER"
    GREEN = "GREEN"
    NONE = "NONE"


class ObjectClass(str, enum.Enum):
    VEHICLE = "VEHICLE"
    TWO_WHEELER = "TWO_WHEELER"
    PEDESTRIAN = "PEDESTRIAN"
    ZEBRA_CROSSING = "ZEBRA_CROSSING"
    LANE = "LANE"
    DIVIDER = "DIVIDER"
    LICENSE_PLATE = "LICENSE_PLATE"


MOVING_CLASSES = frozenset({ObjectClass.VEHICLE, ObjectClass.TWO_WHEELER})
STATIC_CLASSES = frozenset({ObjectClass.ZEBRA_CROSSING, ObjectClass.LANE, ObjectClass.DIVIDER})


@dataclass(frozen=True)
class PlateReading:
    text: str
    confidence: float

    def __post_init__(self) -> None:
        if not _PLATE_TEXT.match(self.text):
            raise ValueError(f"plate text must be 1-12 chars of [A-Z0-9], got {self.text!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"plate confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class Detection:
    class_id: ObjectClass
    bbox: tuple[float, float, float, float]
    confidence: float
    embedding: Optional[tuple[float, ...]] = None
    plate_reading: Optional[PlateReading] = None

    def __post_init__(self) -> None:
        _, _, w, h = self.bbox
        if not (w > 0 and h > 0):
            raise ValueError(f"bbox needs positive size, got {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")
        if self.embedding is not None:
            norm = math.sqrt(math.fsum(v * v for v in self.embedding))
            if abs(norm - 1.0) > _NORM_TOL:
                raise ValueError(f"embedding is not unit length (norm={norm})")
        if self.plate_reading is not None and self.class_id is not ObjectClass.LICENSE_PLATE:
            raise ValueError("plate_reading only allowed on LICENSE_PLATE detections")

    @property
    def bottom_center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h)

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)

    def within(self, width: float, height: float) -> bool:
        x, y, w, h = self.bbox
        return x >= 0 and y >= 0 and x + w <= width and y + h <= height


@dataclass(frozen=True)
class DetectionFrame:
    frame_index: int
    t_capture: int
    t_mono: int
    signal_phase: SignalPhase = SignalPhase.NONE
    detections: tuple[Detection, ...] = ()


@dataclass(frozen=True)
class GroundTruth:
    """One scripted fact about a vehicle.

    ``violation_class`` is a violation name (``SIGNAL_JUMP`` ...) or
    ``SPEED_TRUTH`` for a lawful vehicle whose true speed is known.
    """

    violation_class: str
    label: str
    span: tuple[int, int]
    speed_kmh: Optional[float] = None
    plate: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    frames: tuple[DetectionFrame, ...] = ()
    frame_rate: float = 30.0
    frame_dims: tuple[int, int] = (0, 0)
    ground_truth: tuple[GroundTruth, ...] = ()

    @property
    def frame_interval(self) -> float:
        return 1.0 / self.frame_rate


def frame_times_us(frame_index: int, frame_rate: float, epoch_us: int = 0) -> tuple[int, int]:
    """Capture (wall) and monotonic stamps for a frame at a fixed cadence."""
    offset = int(round(frame_index * 1_000_000 / frame_rate))
    return epoch_us + offset, offset


def gt_path_for(path: os.PathLike | str) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".gt.json")


# -- encoding --------------------------------------------------------------

def _encode_detection(det: Detection) -> dict:
    out: dict = {"c": det.class_id.value, "b": [float(v) for v in det.bbox], "s": float(det.confidence)}
    if det.embedding is not None:
        out["e"] = [float(v) for v in det.embedding]
    if det.plate_reading is not None:
        out["p"] = {"txt": det.plate_reading.text, "s": float(det.plate_reading.confidence)}
    return out


def encode_frame(frame: DetectionFrame) -> str:
    rec = {
        "i": frame.frame_index,
        "tc": frame.t_capture,
        "tm": frame.t_mono,
        "phase": frame.signal_phase.value,
        "det": [_encode_detection(d) for d in frame.detections],
    }
    return json.dumps(rec, separators=(",", ":"))


def encode_header(scenario: Scenario) -> str:
    rate = scenario.frame_rate
    if float(rate).is_integer():
        rate = int(rate)
    width, height = scenario.frame_dims
    return json.dumps({"format": FORMAT_TAG, "frame_rate": rate, "width": int(width), "height": int(height)},
                      separators=(",", ":"))


def encode_ground_truth(gt: Iterable[GroundTruth]) -> str:
    items = []
    for g in gt:
        item = {"class": g.violation_class, "label": g.label, "span": [int(g.span[0]), int(g.span[1])],
                "speed_kmh": g.speed_kmh}
        if g.plate is not None:
            item["plate"] = g.plate
        items.append(item)
    return json.dumps(items, indent=1)


def write_trace(scenario: Scenario, path: os.PathLike | str) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            fh.write(encode_header(scenario) + "\n")
            for frame in scenario.frames:
                fh.write(encode_frame(frame) + "\n")
        gt_file = gt_path_for(path)
        if scenario.ground_truth:
            gt_file.write_text(encode_ground_truth(scenario.ground_truth) + "\n", encoding="utf-8")
        elif gt_file.exists():
            gt_file.unlink()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# -- decoding --------------------------------------------------------------

def _decode_detection(raw: dict, line_no: int) -> Detection:
    try:
        cls = ObjectClass(raw["c"])
        bbox = tuple(float(v) for v in raw["b"])
        if len(bbox) != 4:
            raise ValueError("bbox must have 4 numbers")
        emb = raw.get("e")
        plate = raw.get("p")
        return Detection(
            class_id=cls,
            bbox=bbox,  # type: ignore[arg-type]
            confidence=float(raw["s"]),
            embedding=tuple(float(v) for v in emb) if emb is not None else None,
            plate_reading=PlateReading(str(plate["txt"]), float(plate["s"])) if plate is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc


def _decode_frame(raw: dict, line_no: int) -> DetectionFrame:
    try:
        idx = raw["i"]
        tc = raw["tc"]
        tm = raw["tm"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (idx, tc, tm)):
            raise ValueError("i/tc/tm must be integers")
        if idx < 0:
            raise ValueError("negative frame index")
        phase = SignalPhase(raw.get("phase", "NONE"))
        dets = tuple(_decode_detection(d, line_no) for d in raw["det"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc
    return DetectionFrame(idx, tc, tm, phase, dets)


def iter_trace(path: os.PathLike | str) -> Iterator[tuple[dict, DetectionFrame | None]]:
    """Yield ``(header, frame)`` pairs; validates ordering and bounds as it goes.

    An empty file yields nothing. A header-only file yields ``(header, None)``
    once so callers still learn the frame rate.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    with fh:
        header = None
        prev: DetectionFrame | None = None
        emitted = False
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, str(exc)) from exc
            if not isinstance(raw, dict):
                raise MalformedRecord(line_no, "record is not an object")
            if header is None:
                header = _check_header(raw, line_no)
                continue
            frame = _decode_frame(raw, line_no)
            _check_frame(frame, prev, header)
            prev = frame
            emitted = True
            yield header, frame
        if header is not None and not emitted:
            yield header, None


def _check_header(raw: dict, line_no: int) -> dict:
    if raw.get("format") != FORMAT_TAG:
        raise MalformedRecord(line_no, f"expected format {FORMAT_TAG!r}")
    try:
        rate = raw["frame_rate"]
        width, height = raw["width"], raw["height"]
        if not isinstance(rate, (int, float)) or rate <= 0:
            raise ValueError("frame_rate must be positive")
        if not (isinstance(width, int) and isinstance(height, int)) or width < 0 or height < 0:
            raise ValueError("width/height must be non-negative integers")
    except (KeyError, ValueError) as exc:
        raise MalformedRecord(line_no, str(exc)) from exc
    return raw


def _check_frame(frame: DetectionFrame, prev: DetectionFrame | None, header: dict) -> None:
    if prev is not None:
        if frame.frame_index <= prev.frame_index:
            raise NonMonotonicTime(frame.frame_index, "frame_index")
        if frame.t_mono <= prev.t_mono:
            raise NonMonotonicTime(frame.frame_index, "t_mono")
        if frame.t_capture < prev.t_capture:
            raise NonMonotonicTime(frame.frame_index, "t_capture")
    width, height = header["width"], header["height"]
    for det in frame.detections:
        if not det.within(width, height):
            raise BBoxOutOfBounds(frame.frame_index, det.bbox)


def read_ground_truth(path: os.PathLike | str) -> tuple[GroundTruth, ...]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise MalformedRecord(exc.lineno, str(exc)) from exc
    out = []
    for n, item in enumerate(raw, start=1):
        try:
            speed = item.get("speed_kmh")
            out.append(GroundTruth(
                violation_class=str(item["class"]),
                label=str(item["label"]),
                span=(int(item["span"][0]), int(item["span"][1])),
                speed_kmh=float(speed) if speed is not None else None,
                plate=item.get("plate"),
            ))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MalformedRecord(n, str(exc)) from exc
    return tuple(out)


def read_trace(path: os.PathLike | str) -> Scenario:
    header = None
    frames: list[DetectionFrame] = []
    for header, frame in iter_trace(path):
        if frame is not None:
            frames.append(frame)
    if header is None:
        return Scenario()
    gt_file = gt_path_for(path)
    gt = read_ground_truth(gt_file) if gt_file.exists() else ()
    if frames:
        lo, hi = frames[0].frame_index, frames[-1].frame_index
        for g in gt:
            if not (lo <= g.span[0] <= g.span[1] <= hi):
                raise MalformedRecord(0, f"ground-truth span {g.span} outside trace [{lo}, {hi}]")
    return Scenario(
        frames=tuple(frames),
        frame_rate=header["frame_rate"],
        frame_dims=(header["width"], header["height"]),
        ground_truth=gt,
    )


def static_detections(frame: DetectionFrame) -> list[Detection]:
    return [d for d in frame.detections if d.class_id in STATIC_CLASSES]


def split_by_class(dets: Sequence[Detection]) -> dict[ObjectClass, list[Detection]]:
    out: dict[ObjectClass, list[Detection]] = {}
    for d in dets:
        out.setdefault(d.class_id, []).append(d)
    return out

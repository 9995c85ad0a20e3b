from __future__ import annotations

import json

import pytest

from rnode.errors import BBoxOutOfBounds, IoFailure, MalformedRecord, NonMonotonicTime
from rnode.trace import (Detection, DetectionFrame, GroundTruth, ObjectClass, PlateReading, Scenario, SignalPhase,
                         frame_times_us, gt_path_for, iter_trace, read_trace, write_trace)


def _frame(i, dets=(), phase=SignalPhase.GREEN, rate=30.0):
    tc, tm = frame_times_us(i, rate, epoch_us=1_700_000_000_000_000)
    return DetectionFrame(i, tc, tm, phase, tuple(dets))


def _write_lines(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


HEADER = {"format": "rnode-trace/1", "frame_rate": 30, "width": 640, "height": 480}


def test_round_trip(tmp_path):
    dets = (
        Detection(ObjectClass.VEHICLE, (10.0, 20.0, 30.0, 40.0), 0.9, embedding=(0.6, 0.8)),
        Detection(ObjectClass.LICENSE_PLATE, (15.0, 50.0, 8.0, 3.0), 0.8,
                  plate_reading=PlateReading("KA01AB1234", 0.77)),
        Detection(ObjectClass.ZEBRA_CROSSING, (0.0, 400.0, 640.0, 40.0), 0.95),
    )
    sc = Scenario(frames=(_frame(0, dets, SignalPhase.RED), _frame(1, dets[:1])), frame_rate=30.0,
                  frame_dims=(640, 480),
                  ground_truth=(GroundTruth("SIGNAL_JUMP", "v1", (0, 1), None, "KA01AB1234"),))
    path = tmp_path / "t.jsonl"
    write_trace(sc, path)
    assert gt_path_for(path).exists()
    back = read_trace(path)
    assert back.frames == sc.frames
    assert back.ground_truth == sc.ground_truth
    assert back.frame_dims == (640, 480)


def test_empty_and_header_only(tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert list(iter_trace(empty)) == []
    assert read_trace(empty).frames == ()

    head = tmp_path / "h.jsonl"
    _write_lines(head, [HEADER])
    items = list(iter_trace(head))
    assert len(items) == 1 and items[0][1] is None


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        list(iter_trace(tmp_path / "nope.jsonl"))


@pytest.mark.parametrize("bad", [
    "not json",
    json.dumps({"i": 0, "tc": 0, "tm": 0}),  # missing det
    json.dumps({"i": 0, "tc": 0, "tm": 0, "det": [{"c": "UFO", "b": [0, 0, 1, 1], "s": 0.5}]}),
    json.dumps({"i": 0, "tc": 0.5, "tm": 0, "det": []}),
])
def test_malformed_records(tmp_path, bad):
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(HEADER) + "\n" + bad + "\n")
    with pytest.raises(MalformedRecord):
        list(iter_trace(path))


def test_bad_header(tmp_path):
    path = tmp_path / "b.jsonl"
    _write_lines(path, [{"format": "other", "frame_rate": 30, "width": 1, "height": 1}])
    with pytest.raises(MalformedRecord):
        list(iter_trace(path))


def test_non_monotonic(tmp_path):
    path = tmp_path / "n.jsonl"
    _write_lines(path, [HEADER, {"i": 1, "tc": 10, "tm": 10, "det": []}, {"i": 1, "tc": 20, "tm": 20, "det": []}])
    with pytest.raises(NonMonotonicTime):
        list(iter_trace(path))
    _write_lines(path, [HEADER, {"i": 1, "tc": 10, "tm": 10, "det": []}, {"i": 2, "tc": 20, "tm": 10, "det": []}])
    with pytest.raises(NonMonotonicTime):
        list(iter_trace(path))


def test_bbox_out_of_bounds(tmp_path):
    path = tmp_path / "o.jsonl"
    _write_lines(path, [HEADER, {"i": 0, "tc": 0, "tm": 0,
                                 "det": [{"c": "VEHICLE", "b": [630, 10, 20, 20], "s": 0.9}]}])
    with pytest.raises(BBoxOutOfBounds):
        list(iter_trace(path))


def test_frame_times_are_integer_microseconds():
    tc, tm = frame_times_us(3, 30.0, epoch_us=5)
    assert (tc, tm) == (100_005, 100_000)
    assert isinstance(tc, int) and isinstance(tm, int)


def test_detection_geometry():
    d = Detection(ObjectClass.VEHICLE, (10, 20, 30, 40), 0.9)
    assert d.bottom_center == (25, 60)
    assert d.center == (25, 40)

from __future__ import annotations

import numpy as np
import pytest

from rnode.errors import ClassMismatch, OutOfOrderFrame
from rnode.trace import Detection, DetectionFrame, ObjectClass, SignalPhase
from rnode.tracker import (KalmanFilter, Tracker, TrackerConfig, bbox_to_measurement, cost_matrix, iou, iou_matrix,
                           measurement_to_bbox, predict, update)


def _frame(i, dets):
    return DetectionFrame(i, i * 33_333, i * 33_333, SignalPhase.GREEN, tuple(dets))


def _veh(x, y, w=20.0, h=40.0, emb=None, conf=0.9, cls=ObjectClass.VEHICLE):
    return Detection(cls, (x, y, w, h), conf, emb)


def test_iou_basic():
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0
    assert iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)


def test_iou_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 50, size=(6, 4))
    b = rng.uniform(0, 50, size=(5, 4))
    m = iou_matrix(a, b)
    for i in range(6):
        for j in range(5):
            assert m[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)


def test_measurement_round_trip():
    box = (10.0, 20.0, 30.0, 60.0)
    assert measurement_to_bbox(bbox_to_measurement(box)) == pytest.approx(box)


def test_confirmation_and_deletion():
    cfg = TrackerConfig(n_init=3, max_age=5)
    trk = Tracker(cfg)
    for i in range(3):
        tracks = trk.step(_frame(i, [_veh(100 + 2 * i, 100)]))
    assert len(tracks) == 1 and tracks[0].is_confirmed
    tid = tracks[0].track_id
    deleted_at = None
    for i in range(3, 12):
        trk.step(_frame(i, []))
        if trk.last_deleted:
            deleted_at = i
            assert trk.last_deleted[0].track_id == tid
            break
    # misses > max_age deletes: 6 consecutive misses
    assert deleted_at == 3 + cfg.max_age


def test_identity_kept_through_short_occlusion():
    trk = Tracker(TrackerConfig())
    ids = set()
    for i in range(40):
        dets = [] if 15 <= i < 20 else [_veh(100, 50 + 3 * i)]
        trk.step(_frame(i, dets))
        ids.update(trk.last_matches)
    assert ids == {1}


def test_two_crossing_vehicles_keep_ids_with_appearance():
    e1, e2 = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
    trk = Tracker(TrackerConfig())
    seen = {}
    for i in range(30):
        d1 = _veh(50 + 4 * i, 100, emb=e1)
        d2 = _veh(170 - 4 * i, 100, emb=e2)
        trk.step(_frame(i, [d1, d2]))
        for tid, det in trk.last_matches.items():
            seen.setdefault(tid, set()).add(det.embedding)
    assert all(len(v) == 1 for v in seen.values())


def test_low_confidence_and_static_classes_ignored():
    trk = Tracker(TrackerConfig(confidence_threshold=0.5))
    trk.step(_frame(0, [_veh(0, 0, conf=0.3), _veh(50, 50, cls=ObjectClass.LANE)]))
    assert trk.tracks == []


def test_out_of_order_frames():
    trk = Tracker()
    trk.step(_frame(5, []))
    with pytest.raises(OutOfOrderFrame):
        trk.step(_frame(5, []))


def test_update_rejects_class_mismatch():
    trk = Tracker()
    trk.step(_frame(0, [_veh(0, 0)]))
    with pytest.raises(ClassMismatch):
        update(trk.tracks[0], _veh(0, 0, cls=ObjectClass.TWO_WHEELER))


def test_cost_matrix_gates_by_class_and_overlap():
    trk = Tracker()
    trk.step(_frame(0, [_veh(0, 0)]))
    t = trk.tracks[0]
    predict(t)
    far = _veh(300, 300)
    other = _veh(0, 0, cls=ObjectClass.TWO_WHEELER)
    near = _veh(1, 1)
    c = cost_matrix([t], [far, other, near], TrackerConfig())
    assert np.isinf(c[0, 0]) and np.isinf(c[0, 1]) and np.isfinite(c[0, 2])


def test_prediction_converges_for_constant_velocity():
    # slow constant motion: after 10 updates the one-step prediction is sub-pixel
    trk = Tracker()
    for i in range(11):
        trk.step(_frame(i, [_veh(100 + 3 * i, 100 + 2 * i)]))
    t = trk.tracks[0]
    kf = trk.kf
    mean, _ = kf.predict(t.state.mean, t.state.covariance)
    x, y, w, h = measurement_to_bbox(mean[:4])
    assert abs(x - (100 + 3 * 11)) < 0.5 and abs(y - (100 + 2 * 11)) < 0.5


def test_kalman_covariance_stays_symmetric():
    kf = KalmanFilter()
    mean, cov = kf.initiate((10, 10, 0.5, 40))
    for k in range(50):
        mean, cov = kf.predict(mean, cov)
        mean, cov = kf.update(mean, cov, (10 + k, 10, 0.5, 40))
        assert np.array_equal(cov, cov.T)

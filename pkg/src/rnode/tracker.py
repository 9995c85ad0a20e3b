"""Multi-object tracker: constant-velocity Kalman filter plus appearance re-id.

The state is ``(cx, cy, a, h, vcx, vcy, va, vh)``: box centre, aspect ratio
``w / h``, height and their per-frame velocities. Noise is scaled by the box
height, following the usual DeepSORT parameterization.

Association solves one global optimal assignment over a cost that mixes IoU
with the minimum cosine distance to each track's embedding gallery. A pair is
inadmissible only when it fails *both* the IoU gate and the appearance gate.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ClassMismatch, OutOfOrderFrame
from .trace import MOVING_CLASSES, Detection, DetectionFrame, ObjectClass

BBox = tuple[float, float, float, float]

# any admissible cost is <= 1, so this dominates every sum of real costs
_INADMISSIBLE = 1e6


class TrackStatus(str, enum.Enum):
    TENTATIVE = "TENTATIVE"
    CONFIRMED = "CONFIRMED"
    DELETED = "DELETED"


@dataclass
class TrackerConfig:
    iou_threshold: float = 0.45
    confidence_threshold: float = 0.50
    max_age: int = 30
    n_init: int = 3
    lambda_motion: float = 0.5
    gate_appearance: float = 0.4
    embedding_capacity: int = 50

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in [0, 1]")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if not 0.0 <= self.lambda_motion <= 1.0:
            raise ValueError("lambda_motion must be in [0, 1]")
        if not 0.0 <= self.gate_appearance <= 2.0:
            raise ValueError("gate_appearance must be a cosine distance in [0, 2]")
        if self.max_age < 0 or self.n_init < 1 or self.embedding_capacity < 1:
            raise ValueError("max_age >= 0, n_init >= 1, embedding_capacity >= 1 required")


class KalmanFilter:
    """Constant-velocity filter in (cx, cy, a, h) measurement space.

    ``process_noise_scale`` multiplies Q (0 disables process noise) and
    ``init_velocity_scale`` multiplies the initial velocity standard deviation
    (large values give a diffuse prior on velocity).
    """

    ndim = 4

    def __init__(self, std_weight_position: float = 1.0 / 20, std_weight_velocity: float = 1.0 / 160,
                 process_noise_scale: float = 1.0, measurement_noise_scale: float = 1.0,
                 init_velocity_scale: float = 1.0) -> None:
        self.std_weight_position = std_weight_position
        self.std_weight_velocity = std_weight_velocity
        self.process_noise_scale = process_noise_scale
        self.measurement_noise_scale = measurement_noise_scale
        self.init_velocity_scale = init_velocity_scale
        self.F = np.eye(8)
        for i in range(4):
            self.F[i, 4 + i] = 1.0
        self.H = np.eye(4, 8)

    def initiate(self, z: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        mean = np.concatenate([z, np.zeros(4)])
        h = z[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        vs = self.init_velocity_scale
        std = [2 * sp * h, 2 * sp * h, 1e-2, 2 * sp * h,
               10 * sv * h * vs, 10 * sv * h * vs, 1e-5 * vs, 10 * sv * h * vs]
        return mean, np.diag(np.square(std))

    def process_noise(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        sp, sv = self.std_weight_position, self.std_weight_velocity
        std = [sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h]
        return np.diag(np.square(std)) * self.process_noise_scale

    def measurement_noise(self, mean: np.ndarray) -> np.ndarray:
        h = mean[3]
        sp = self.std_weight_position
        std = [sp * h, sp * h, 1e-1, sp * h]
        return np.diag(np.square(std)) * self.measurement_noise_scale

    def predict(self, mean: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Q = self.process_noise(mean)
        mean = self.F @ mean
        cov = self.F @ cov @ self.F.T + Q
        return mean, 0.5 * (cov + cov.T)

    def update(self, mean: np.ndarray, cov: np.ndarray, z: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=float)
        H = self.H
        R = self.measurement_noise(mean)
        S = H @ cov @ H.T + R
        PHt = cov @ H.T
        try:
            K = np.linalg.solve(S, PHt.T).T
        except np.linalg.LinAlgError:
            K = PHt @ np.linalg.pinv(S)
        innovation = z - H @ mean
        new_mean = mean + K @ innovation
        # Joseph form keeps the posterior symmetric PSD under round-off
        I_KH = np.eye(8) - K @ H
        new_cov = I_KH @ cov @ I_KH.T + K @ R @ K.T
        return new_mean, 0.5 * (new_cov + new_cov.T)


DEFAULT_FILTER = KalmanFilter()


@dataclass
class TrackState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_bbox(self) -> BBox:
        return measurement_to_bbox(self.mean[:4])


@dataclass(frozen=True)
class HistoryEntry:
    frame_index: int
    bbox: BBox
    point: tuple[float, float]
    observed: bool


@dataclass
class Track:
    track_id: int
    state: TrackState
    class_id: ObjectClass
    status: TrackStatus = TrackStatus.TENTATIVE
    hits: int = 1
    misses: int = 0
    embedding_gallery: deque = field(default_factory=lambda: deque(maxlen=50))
    history: list[HistoryEntry] = field(default_factory=list)
    plate_evidence: list = field(default_factory=list)
    _gallery_cache: tuple = field(default=(None, None), repr=False, compare=False)

    def gallery_matrix(self) -> np.ndarray:
        """Stacked gallery, rebuilt only when the gallery has changed."""
        g = self.embedding_gallery
        key = (len(g), id(g[-1]) if g else None, id(g[0]) if g else None)
        if self._gallery_cache[0] != key:
            self._gallery_cache = (key, np.stack(g))
        return self._gallery_cache[1]

    @property
    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def is_deleted(self) -> bool:
        return self.status is TrackStatus.DELETED

    def predicted_bbox(self) -> BBox:
        return self.state.to_bbox()

    def mark_deleted(self) -> None:
        self.status = TrackStatus.DELETED


def bbox_to_measurement(bbox: Sequence[float]) -> np.ndarray:
    x, y, w, h = bbox
    return np.array([x + w / 2.0, y + h / 2.0, w / h, h], dtype=float)


def measurement_to_bbox(z: Sequence[float]) -> BBox:
    cx, cy, a, h = (float(v) for v in z[:4])
    w = a * h
    return (cx - w / 2.0, cy - h / 2.0, w, h)


def bottom_center(bbox: Sequence[float]) -> tuple[float, float]:
    x, y, w, h = bbox
    return (x + w / 2.0, y + h)


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def predict(track: Track, kf: KalmanFilter = DEFAULT_FILTER) -> Track:
    if track.is_deleted:
        raise ValueError(f"cannot predict deleted track {track.track_id}")
    track.state.mean, track.state.covariance = kf.predict(track.state.mean, track.state.covariance)
    return track


def update(track: Track, detection: Detection, config: TrackerConfig | None = None,
           kf: KalmanFilter = DEFAULT_FILTER) -> Track:
    config = config or TrackerConfig()
    if detection.class_id != track.class_id:
        raise ClassMismatch(f"track {track.track_id} is {track.class_id.value}, detection is {detection.class_id.value}")
    if detection.confidence < config.confidence_threshold:
        raise ValueError("detection below confidence threshold")
    track.state.mean, track.state.covariance = kf.update(
        track.state.mean, track.state.covariance, bbox_to_measurement(detection.bbox))
    track.hits += 1
    track.misses = 0
    if detection.embedding is not None:
        track.embedding_gallery.append(np.asarray(detection.embedding, dtype=float))
    if track.status is TrackStatus.TENTATIVE and track.hits >= config.n_init:
        track.status = TrackStatus.CONFIRMED
    return track


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) and (m, 4) arrays of x, y, w, h boxes."""
    ax, ay, aw, ah = (a[:, k:k + 1] for k in range(4))
    bx, by, bw, bh = (b[None, :, k] for k in range(4))
    iw = np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx)
    ih = np.minimum(ay + ah, by + bh) - np.maximum(ay, by)
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    union = aw * ah + bw * bh - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((inter > 0) & (union > 0), inter / union, 0.0)


def cost_matrix(tracks: Sequence[Track], detections: Sequence[Detection],
                config: TrackerConfig) -> np.ndarray:
    """Association cost; ``inf`` marks inadmissible pairs."""
    n, m = len(tracks), len(detections)
    cost = np.full((n, m), math.inf)
    if n == 0 or m == 0:
        return cost
    lam = config.lambda_motion
    overlap = iou_matrix(np.array([t.predicted_bbox() for t in tracks], dtype=float),
                         np.array([d.bbox for d in detections], dtype=float))
    same_class = np.array([[d.class_id == t.class_id for d in detections] for t in tracks])
    has_emb = np.array([d.embedding is not None for d in detections])
    emb_idx = np.flatnonzero(has_emb)
    det_emb = np.array([detections[j].embedding for j in emb_idx], dtype=float) if emb_idx.size else None

    # motion-only cost where either side lacks an appearance descriptor
    iou_ok = overlap >= config.iou_threshold
    motion_only = np.where(same_class & iou_ok, 1.0 - overlap, math.inf)
    for i, trk in enumerate(tracks):
        if not trk.embedding_gallery or det_emb is None:
            cost[i] = motion_only[i]
            continue
        cost[i, ~has_emb] = motion_only[i, ~has_emb]
        gallery = trk.gallery_matrix()
        d_app = np.min(1.0 - gallery @ det_emb.T, axis=0)
        o = overlap[i, emb_idx]
        admissible = same_class[i, emb_idx] & ((o >= config.iou_threshold) | (d_app <= config.gate_appearance))
        cost[i, emb_idx] = np.where(admissible, lam * (1.0 - o) + (1.0 - lam) * d_app, math.inf)
    return cost


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-cardinality, minimum-cost matching over the finite entries of ``cost``."""
    if cost.size == 0:
        return []
    finite = np.isfinite(cost)
    if not finite.any():
        return []
    padded = np.where(finite, cost, _INADMISSIBLE)
    rows, cols = linear_sum_assignment(padded)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if finite[r, c]]


def associate(tracks: Sequence[Track], detections: Sequence[Detection], config: TrackerConfig | None = None
              ) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Match tracks (already predicted) to detections.

    Returns ``(matches, unmatched_track_ids, unmatched_detection_indices)`` where
    ``matches`` holds ``(track_id, detection_index)`` pairs.
    """
    config = config or TrackerConfig()
    order = sorted(range(len(tracks)), key=lambda i: tracks[i].track_id)
    ordered = [tracks[i] for i in order]
    pairs = solve_assignment(cost_matrix(ordered, detections, config))
    matches = sorted((ordered[r].track_id, c) for r, c in pairs)
    matched_t = {t for t, _ in matches}
    matched_d = {d for _, d in matches}
    unmatched_tracks = [t.track_id for t in ordered if t.track_id not in matched_t]
    unmatched_dets = [j for j in range(len(detections)) if j not in matched_d]
    return matches, unmatched_tracks, unmatched_dets


class Tracker:
    """Per-stream tracker. Frames must be fed in trace order."""

    def __init__(self, config: TrackerConfig | None = None, kf: KalmanFilter | None = None) -> None:
        self.config = config or TrackerConfig()
        self.kf = kf or DEFAULT_FILTER
        self.tracks: list[Track] = []
        self.deleted: list[Track] = []
        self._next_id = 1
        self._last_frame: Optional[int] = None

    def _spawn(self, det: Detection, frame_index: int) -> Track:
        mean, cov = self.kf.initiate(bbox_to_measurement(det.bbox))
        trk = Track(
            track_id=self._next_id,
            state=TrackState(mean, cov),
            class_id=det.class_id,
            embedding_gallery=deque(maxlen=self.config.embedding_capacity),
        )
        self._next_id += 1
        if det.embedding is not None:
            trk.embedding_gallery.append(np.asarray(det.embedding, dtype=float))
        if trk.hits >= self.config.n_init:
            trk.status = TrackStatus.CONFIRMED
        trk.history.append(HistoryEntry(frame_index, tuple(det.bbox), bottom_center(det.bbox), True))
        return trk

    def step(self, frame: DetectionFrame) -> list[Track]:
        """Advance one frame; returns the live tracks.

        Tracks deleted on this frame are moved to ``self.deleted`` and also
        reported through ``self.last_deleted``.
        """
        if self._last_frame is not None and frame.frame_index <= self._last_frame:
            raise OutOfOrderFrame(f"frame {frame.frame_index} after {self._last_frame}")
        self._last_frame = frame.frame_index
        cfg = self.config

        dets = [d for d in frame.detections
                if d.class_id in MOVING_CLASSES and d.confidence >= cfg.confidence_threshold]
        for trk in self.tracks:
            predict(trk, self.kf)

        matches, unmatched_tracks, unmatched_dets = associate(self.tracks, dets, cfg)
        by_id = {t.track_id: t for t in self.tracks}
        self.last_matches = {tid: dets[j] for tid, j in matches}

        for tid, j in matches:
            trk = update(by_id[tid], dets[j], cfg, self.kf)
            trk.history.append(HistoryEntry(frame.frame_index, tuple(dets[j].bbox),
                                            bottom_center(dets[j].bbox), True))

        self.last_deleted = []
        for tid in unmatched_tracks:
            trk = by_id[tid]
            trk.misses += 1
            if trk.misses > cfg.max_age:
                trk.mark_deleted()
                self.last_deleted.append(trk)
                continue
            box = trk.predicted_bbox()
            trk.history.append(HistoryEntry(frame.frame_index, box, bottom_center(box), False))

        for j in unmatched_dets:
            trk = self._spawn(dets[j], frame.frame_index)
            self.tracks.append(trk)
            self.last_matches[trk.track_id] = dets[j]

        if self.last_deleted:
            self.deleted.extend(self.last_deleted)
            self.tracks = [t for t in self.tracks if not t.is_deleted]
        return list(self.tracks)

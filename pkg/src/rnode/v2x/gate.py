"""Deduplication and rate limiting between event confirmation and publish."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Optional

from .message import SafetyMessage

_US = 1_000_000


class GateDecision(str, enum.Enum):
    FORWARD = "FORWARD"
    DROP_DUP = "DROP_DUP"
    DROP_RATE = "DROP_RATE"


@dataclass(frozen=True)
class GateConfig:
    max_rate_hz: float = 10.0
    dedup_window_s: float = 4.0
    dedup_key: tuple[str, ...] = ("msg_type", "track_id")

    def __post_init__(self) -> None:
        if not self.max_rate_hz > 0:
            raise ValueError("max_rate_hz must be > 0")
        if not 0.0 <= self.dedup_window_s <= 60.0:
            raise ValueError("dedup_window_s must be in [0, 60]")
        allowed = {"msg_type", "track_id", "plate_hash", "cam_id", "roi_id"}
        if not self.dedup_key or not set(self.dedup_key) <= allowed:
            raise ValueError(f"dedup_key fields must come from {sorted(allowed)}")


class GateState:
    """Single-writer gate state. ``now`` is in microseconds and must not go backwards."""

    def __init__(self, config: GateConfig | None = None) -> None:
        self.config = config or GateConfig()
        self.last_forward: dict[Hashable, int] = {}
        self.recent: deque[int] = deque()
        self.now: Optional[int] = None
        self.counts = {d: 0 for d in GateDecision}

    def key(self, msg: SafetyMessage) -> tuple:
        return tuple(getattr(msg, f).value if f == "msg_type" else getattr(msg, f) for f in self.config.dedup_key)

    def offer(self, msg: SafetyMessage, now: int) -> GateDecision:
        if self.now is not None and now < self.now:
            raise ValueError(f"gate clock went backwards: {now} < {self.now}")
        self.now = now
        cfg = self.config
        window_us = int(round(cfg.dedup_window_s * _US))
        k = self.key(msg)
        last = self.last_forward.get(k)
        if last is not None and now - last < window_us:
            decision = GateDecision.DROP_DUP
        else:
            while self.recent and self.recent[0] <= now - _US:
                self.recent.popleft()
            if len(self.recent) + 1 > cfg.max_rate_hz:
                decision = GateDecision.DROP_RATE
            else:
                decision = GateDecision.FORWARD
                self.recent.append(now)
                self.last_forward[k] = now
                if len(self.last_forward) > 4096:
                    self.last_forward = {kk: t for kk, t in self.last_forward.items() if now - t < window_us}
        self.counts[decision] += 1
        return decision


def gate(msg: SafetyMessage, state: GateState, now: int) -> GateDecision:
    return state.offer(msg, now)

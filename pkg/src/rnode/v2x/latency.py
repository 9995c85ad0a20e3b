"""Per-hop latency samples and median / p95 reporting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..errors import EmptySamples


@dataclass(frozen=True)
class LatencySample:
    event_id: int
    t_frame: int
    t_log: int
    t_publish: int
    t_broker: int
    t_endpoint: int

    def __post_init__(self) -> None:
        ts = (self.t_frame, self.t_log, self.t_publish, self.t_broker, self.t_endpoint)
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"latency stamps out of order for event {self.event_id}: {ts}")


def lower_median(sorted_values: Sequence[float]) -> float:
    return sorted_values[(len(sorted_values) - 1) // 2]


def p95_index(n: int) -> int:
    """``ceil(0.95 n) - 1`` in integer arithmetic."""
    return (95 * n + 99) // 100 - 1


@dataclass(frozen=True)
class HopStats:
    median_ms: float
    p95_ms: float

    @classmethod
    def of(cls, deltas_ms: Sequence[float]) -> "HopStats":
        s = sorted(deltas_ms)
        return cls(lower_median(s), s[p95_index(len(s))])

    def to_dict(self) -> dict:
        return {"median_ms": self.median_ms, "p95_ms": self.p95_ms}


@dataclass(frozen=True)
class LatencyReport:
    frame_to_log: HopStats
    node_to_broker: HopStats
    broker_to_endpoint: HopStats
    end_to_end: HopStats
    count: int

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "frame_to_log": self.frame_to_log.to_dict(),
            "node_to_broker": self.node_to_broker.to_dict(),
            "broker_to_endpoint": self.broker_to_endpoint.to_dict(),
            "end_to_end": self.end_to_end.to_dict(),
        }


def latency_report(samples: Sequence[LatencySample]) -> LatencyReport:
    if not samples:
        raise EmptySamples("latency_report needs at least one sample")

    def ms(a: int, b: int) -> float:
        return (b - a) / 1000.0

    return LatencyReport(
        frame_to_log=HopStats.of([ms(s.t_frame, s.t_log) for s in samples]),
        node_to_broker=HopStats.of([ms(s.t_publish, s.t_broker) for s in samples]),
        broker_to_endpoint=HopStats.of([ms(s.t_broker, s.t_endpoint) for s in samples]),
        end_to_end=HopStats.of([ms(s.t_frame, s.t_endpoint) for s in samples]),
        count=len(samples),
    )

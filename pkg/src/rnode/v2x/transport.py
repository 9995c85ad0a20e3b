"""Transport abstraction and the in-process simulated broker.

The simulation runs on one logical microsecond clock. Each publish makes up
to ``max_attempts`` attempts with exponential backoff; an attempt is lost
with probability ``drop_prob``. A delivered message reaches the broker
after a node-to-broker delay and each subscribed endpoint after a further
broker-to-endpoint delay. The gateway re-wraps the payload in a DENM-style
envelope keyed by event id, so endpoints can discard redeliveries.
"""

from __future__ import annotations

import json
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import TransportDown
from .message import SafetyMessage

MAX_CLOCK_OFFSET_US = 10_000


# -- delay models ---------------------------------------------------------------

class DelayModel(ABC):
    @abstractmethod
    def sample_us(self, rng: np.random.Generator) -> int: ...


@dataclass(frozen=True)
class FixedDelay(DelayModel):
    ms: float = 0.0

    def sample_us(self, rng: np.random.Generator) -> int:
        return int(round(self.ms * 1000))


class ReplayDelay(DelayModel):
    """Cycles through a recorded list of delays (ms)."""

    def __init__(self, samples_ms: Sequence[float]) -> None:
        if not samples_ms:
            raise ValueError("ReplayDelay needs at least one sample")
        self.samples_us = [int(round(s * 1000)) for s in samples_ms]
        self._i = 0

    def sample_us(self, rng: np.random.Generator) -> int:
        v = self.samples_us[self._i % len(self.samples_us)]
        self._i += 1
        return v


@dataclass(frozen=True)
class LogNormalDelay(DelayModel):
    """Lognormal fitted to a median and a 95th percentile (ms)."""

    median_ms: float
    p95_ms: float

    def __post_init__(self) -> None:
        if not 0 < self.median_ms <= self.p95_ms:
            raise ValueError("need 0 < median_ms <= p95_ms")

    def sample_us(self, rng: np.random.Generator) -> int:
        sigma = (math.log(self.p95_ms) - math.log(self.median_ms)) / 1.6448536269514722
        return int(round(1000.0 * self.median_ms * math.exp(sigma * rng.standard_normal())))


def delay_from_config(raw: dict | None) -> DelayModel:
    raw = raw or {"kind": "fixed", "ms": 0.0}
    kind = raw.get("kind", "fixed")
    if kind == "fixed":
        return FixedDelay(float(raw.get("ms", 0.0)))
    if kind == "lognormal":
        return LogNormalDelay(float(raw["median_ms"]), float(raw["p95_ms"]))
    if kind == "replay":
        return ReplayDelay([float(x) for x in raw["samples_ms"]])
    raise ValueError(f"unknown delay model {kind!r}")


# -- receipts -----------------------------------------------------------------

@dataclass(frozen=True)
class Receipt:
    event_id: int
    topic: str
    attempts: int
    t_publish: int
    t_broker: int
    t_endpoint: int
    endpoints: tuple[tuple[str, int], ...] = ()


class Transport(ABC):
    @abstractmethod
    def publish(self, msg: SafetyMessage, event_id: int, now: int) -> Receipt:
        """Deliver ``msg``; raises :class:`TransportDown` once retries are exhausted."""

    def close(self) -> None:
        pass


# -- simulated broker ---------------------------------------------------------

@dataclass
class Endpoint:
    """RSU/OBU sink. Idempotent on event id."""

    name: str
    clock_offset_us: int = 0
    received: dict[int, dict] = field(default_factory=dict)
    duplicates: int = 0

    def deliver(self, envelope: dict) -> bool:
        eid = envelope["event_id"]
        if eid in self.received:
            self.duplicates += 1
            return False
        self.received[eid] = envelope
        return True


def denm_envelope(msg: SafetyMessage, event_id: int, topic: str) -> dict:
    """Gateway re-wrap: the payload fields are preserved unchanged."""
    return {"pdu": "DENM", "event_id": event_id, "topic": topic, "payload": msg.to_dict()}


class SimulatedBroker:
    """Accepts concurrent publishers; delivery order is serialized per topic."""

    def __init__(self, endpoints: Sequence[Endpoint] = (), clock_offset_us: int = 0) -> None:
        self.endpoints = list(endpoints)
        self.clock_offset_us = clock_offset_us
        self._topic_clock: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def route(self, topic: str, envelope: dict, t_arrive: int, hop_delays: Sequence[int]) -> list[tuple[str, int]]:
        """Fan out to every endpoint; returns (endpoint, local receive stamp) pairs."""
        with self._lock:
            out = []
            for ep, d in zip(self.endpoints, hop_delays):
                key = (topic, ep.name)
                t = max(t_arrive + d, self._topic_clock.get(key, 0))
                self._topic_clock[key] = t
                ep.deliver(envelope)
                out.append((ep.name, t + ep.clock_offset_us))
            return out


class SimulatedTransport(Transport):
    def __init__(self, node_to_broker: DelayModel | None = None, broker_to_endpoint: DelayModel | None = None,
                 drop_prob: float = 0.0, duplicate_prob: float = 0.0, seed: int = 0, max_attempts: int = 3,
                 backoff_ms: float = 50.0, endpoints: Sequence[str] = ("RSU-1", "OBU-1"),
                 clock_offsets_us: dict[str, int] | None = None,
                 deadletter_path: Optional[str | Path] = None) -> None:
        if not 0.0 <= drop_prob <= 1.0 or not 0.0 <= duplicate_prob <= 1.0:
            raise ValueError("probabilities must be in [0, 1]")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        offsets = dict(clock_offsets_us or {})
        for name, off in offsets.items():
            if abs(off) > MAX_CLOCK_OFFSET_US:
                raise ValueError(f"clock offset for {name} exceeds 10 ms")
        self.node_to_broker = node_to_broker or FixedDelay(0.0)
        self.broker_to_endpoint = broker_to_endpoint or FixedDelay(0.0)
        self.drop_prob = drop_prob
        self.duplicate_prob = duplicate_prob
        self.rng = np.random.default_rng(seed)
        self.max_attempts = max_attempts
        self.backoff_us = int(round(backoff_ms * 1000))
        self.broker = SimulatedBroker([Endpoint(n, offsets.get(n, 0)) for n in endpoints],
                                      offsets.get("broker", 0))
        self.node_offset_us = offsets.get("node", 0)
        self.deadletter_path = Path(deadletter_path) if deadletter_path else None
        self.deadletters: list[dict] = []
        self.receipts: list[Receipt] = []

    @property
    def endpoints(self) -> list[Endpoint]:
        return self.broker.endpoints

    def publish(self, msg: SafetyMessage, event_id: int, now: int) -> Receipt:
        topic = msg.topic()
        t = now
        for attempt in range(1, self.max_attempts + 1):
            if attempt > 1:
                t += self.backoff_us * 2 ** (attempt - 2)
            if self.rng.random() < self.drop_prob:
                continue
            d1 = self.node_to_broker.sample_us(self.rng)
            d2 = [self.broker_to_endpoint.sample_us(self.rng) for _ in self.broker.endpoints]
            envelope = denm_envelope(msg, event_id, topic)
            t_broker = t + d1
            stamps = self.broker.route(topic, envelope, t_broker, d2)
            if self.duplicate_prob and self.rng.random() < self.duplicate_prob:
                self.broker.route(topic, envelope, t_broker, d2)
            t_endpoint = stamps[0][1] if stamps else t_broker
            receipt = Receipt(event_id, topic, attempt, t + self.node_offset_us,
                              t_broker + self.broker.clock_offset_us, t_endpoint, tuple(stamps))
            self.receipts.append(receipt)
            return receipt
        record = {"event_id": event_id, "topic": topic, "reason": f"dropped on all {self.max_attempts} attempts",
                  "payload": msg.to_dict()}
        self.deadletters.append(record)
        if self.deadletter_path is not None:
            with self.deadletter_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        raise TransportDown(f"event {event_id}: {record['reason']}")

"""Cooperative safety-event output: payloads, gate, transport, latency."""

from .gate import GateConfig, GateDecision, GateState, gate
from .latency import HopStats, LatencyReport, LatencySample, latency_report
from .message import (GeoConfig, MsgType, SafetyMessage, Severity, MSG_TYPE_FOR, SEVERITY_FOR, to_safety_message,
                      topic_for)
from .transport import (DelayModel, Endpoint, FixedDelay, LogNormalDelay, Receipt, ReplayDelay, SimulatedBroker,
                        SimulatedTransport, Transport, delay_from_config)

__all__ = [
    "GateConfig", "GateDecision", "GateState", "gate",
    "HopStats", "LatencyReport", "LatencySample", "latency_report",
    "GeoConfig", "MsgType", "SafetyMessage", "Severity", "MSG_TYPE_FOR", "SEVERITY_FOR", "to_safety_message",
    "topic_for",
    "DelayModel", "Endpoint", "FixedDelay", "LogNormalDelay", "Receipt", "ReplayDelay", "SimulatedBroker",
    "SimulatedTransport", "Transport", "delay_from_config",
]

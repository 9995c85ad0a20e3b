"""Edge traffic-violation node operating on recorded detection traces."""

from __future__ import annotations

from .pipeline import PipelineConfig, RunReport, RunResult, bench, commission, run
from .roi import RoiConfig, ZoneSet, derive_zones
from .tracker import Tracker, TrackerConfig
from .trace import DetectionFrame, Detection, Scenario, read_trace, write_trace
from .violations import ViolationConfig, ViolationEngine, ViolationEvent, evaluate

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "RunReport", "RunResult", "bench", "commission", "run",
    "RoiConfig", "ZoneSet", "derive_zones",
    "Tracker", "TrackerConfig",
    "DetectionFrame", "Detection", "Scenario", "read_trace", "write_trace",
    "ViolationConfig", "ViolationEngine", "ViolationEvent", "evaluate",
]

"""Cooperative safety payloads built from violation events."""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from typing import Optional

from ..errors import MissingGeoConfig
from ..plate import hash_plate
from ..violations import ViolationClass, ViolationEvent

EARTH_RADIUS_M = 6378137.0
_HEX64 = re.compile(r"^[0-9a-f]{64}$")


class MsgType(str, enum.Enum):
    VIOL_RL = "VIOL_RL"
    VIOL_SPD = "VIOL_SPD"
    VIOL_WW = "VIOL_WW"
    VIOL_UT = "VIOL_UT"
    VIOL_ZC = "VIOL_ZC"


class Severity(str, enum.Enum):
    INFO = "INFO"
    WARN = "WARN"
    CRITICAL = "CRITICAL"


MSG_TYPE_FOR = {
    ViolationClass.SIGNAL_JUMP: MsgType.VIOL_RL,
    ViolationClass.SPEEDING: MsgType.VIOL_SPD,
    ViolationClass.WRONG_WAY: MsgType.VIOL_WW,
    ViolationClass.ILLEGAL_UTURN: MsgType.VIOL_UT,
    ViolationClass.ZEBRA_BREACH: MsgType.VIOL_ZC,
}

SEVERITY_FOR = {
    MsgType.VIOL_RL: Severity.CRITICAL,
    MsgType.VIOL_WW: Severity.CRITICAL,
    MsgType.VIOL_SPD: Severity.WARN,
    MsgType.VIOL_UT: Severity.WARN,
    MsgType.VIOL_ZC: Severity.WARN,
}

FIELD_ORDER = ("msg_type", "severity", "confidence", "t_utc", "lat", "lon", "heading", "speed", "track_id",
               "plate_hash", "cam_id", "roi_id", "evidence_uri")


@dataclass(frozen=True)
class GeoConfig:
    """Camera placement: image pixel ``origin_px`` sits at (lat, lon).

    Image -y points along ``bearing_deg`` (clockwise from north) and the
    scene is treated as a flat top-down plane at ``px_per_m``.
    """

    lat: float
    lon: float
    px_per_m: float
    origin_px: tuple[float, float] = (0.0, 0.0)
    bearing_deg: float = 0.0
    frame_rate: float = 30.0

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise MissingGeoConfig(f"camera position out of range: {self.lat}, {self.lon}")
        if not self.px_per_m > 0:
            raise MissingGeoConfig("px_per_m must be > 0")
        if not self.frame_rate > 0:
            raise MissingGeoConfig("frame_rate must be > 0")

    def _en(self, dx_px: float, dy_px: float) -> tuple[float, float]:
        """East/north meters for an image-plane displacement."""
        up = -dy_px / self.px_per_m
        right = dx_px / self.px_per_m
        b = math.radians(self.bearing_deg)
        east = up * math.sin(b) + right * math.cos(b)
        north = up * math.cos(b) - right * math.sin(b)
        return east, north

    def to_latlon(self, p: tuple[float, float]) -> tuple[float, float]:
        east, north = self._en(p[0] - self.origin_px[0], p[1] - self.origin_px[1])
        lat = self.lat + math.degrees(north / EARTH_RADIUS_M)
        lon = self.lon + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(self.lat))))
        lat = max(-90.0, min(90.0, lat))
        lon = (lon + 180.0) % 360.0 - 180.0
        return lat, lon

    def heading_deg(self, motion_px: tuple[float, float]) -> float:
        east, north = self._en(*motion_px)
        if east == 0 and north == 0:
            return 0.0
        return math.degrees(math.atan2(east, north)) % 360.0

    def speed_kmh(self, motion_px: tuple[float, float]) -> float:
        return math.hypot(*motion_px) * self.frame_rate / self.px_per_m * 3.6


@dataclass(frozen=True)
class SafetyMessage:
    msg_type: MsgType
    severity: Severity
    confidence: float
    t_utc: int
    lat: float
    lon: float
    heading: float
    speed: float
    track_id: int
    cam_id: str
    roi_id: str
    plate_hash: Optional[str] = None
    evidence_uri: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence outside [0, 1]")
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise ValueError("lat/lon out of range")
        if not 0.0 <= self.heading < 360.0:
            raise ValueError("heading must be in [0, 360)")
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if self.plate_hash is not None and not _HEX64.match(self.plate_hash):
            raise ValueError("plate_hash must be 64 lowercase hex characters")

    def to_dict(self) -> dict:
        out = {}
        for name in FIELD_ORDER:
            value = getattr(self, name)
            if value is None:
                continue
            out[name] = value.value if isinstance(value, enum.Enum) else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)

    def to_bytes(self) -> bytes:
        return self.to_json().encode("utf-8")

    @classmethod
    def from_dict(cls, raw: dict) -> "SafetyMessage":
        raw = dict(raw)
        raw["msg_type"] = MsgType(raw["msg_type"])
        raw["severity"] = Severity(raw["severity"])
        return cls(**raw)

    def topic(self) -> str:
        return topic_for(self.cam_id, self.msg_type)


def topic_for(cam_id: str, msg_type: MsgType) -> str:
    return f"its/violations/{cam_id}/{MsgType(msg_type).value}"


def to_safety_message(event: ViolationEvent, geo: Optional[GeoConfig], salt: Optional[bytes],
                      cam_id: str = "CAM-01", roi_id: str = "ROI-01",
                      evidence_uri: Optional[str] = None) -> SafetyMessage:
    if geo is None:
        raise MissingGeoConfig("a camera geo configuration is required")
    msg_type = MSG_TYPE_FOR[event.violation_class]
    lat, lon = geo.to_latlon(event.location)
    speed = event.speed_kmh if event.speed_kmh is not None else geo.speed_kmh(event.motion)
    plate_hash = hash_plate(event.plate_best, salt) if event.plate_best is not None and salt else None
    return SafetyMessage(
        msg_type=msg_type,
        severity=SEVERITY_FOR[msg_type],
        confidence=round(event.confidence, 4),
        t_utc=event.t_capture,
        lat=round(lat, 7),
        lon=round(lon, 7),
        heading=round(geo.heading_deg(event.motion), 1) % 360.0,
        speed=round(speed, 2),
        track_id=event.track_id,
        cam_id=cam_id,
        roi_id=roi_id,
        plate_hash=plate_hash,
        evidence_uri=evidence_uri,
    )

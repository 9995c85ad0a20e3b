"""Optional external-broker transport speaking MQTT 3.1.1 (via paho-mqtt).

TLS and mutual TLS are plain client options here; certificate lifecycle is
left to the deployment.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from ..errors import TransportDown
from .message import SafetyMessage
from .transport import Receipt, Transport, denm_envelope


@dataclass(frozen=True)
class MqttConfig:
    host: str = "localhost"
    port: int = 8883
    tls: bool = True
    ca_certs: Optional[str] = None
    certfile: Optional[str] = None  # set together with keyfile for mutual TLS
    keyfile: Optional[str] = None
    qos: int = 1
    client_id: str = "rnode"
    timeout_s: float = 5.0
    max_attempts: int = 3
    backoff_ms: float = 50.0


def _paho_client(cfg: MqttConfig):
    import paho.mqtt.client as mqtt

    client = mqtt.Client(mqtt.CallbackAPIVersion.VERSION2, client_id=cfg.client_id,
                         protocol=mqtt.MQTTv311)
    if cfg.tls:
        client.tls_set(ca_certs=cfg.ca_certs, certfile=cfg.certfile, keyfile=cfg.keyfile)
    client.connect(cfg.host, cfg.port)
    client.loop_start()
    return client


class MqttTransport(Transport):
    """Publishes the DENM-style envelope to ``its/violations/<cam_id>/<msg_type>``.

    ``client_factory`` returns an object with paho's ``publish`` /
    ``disconnect`` / ``loop_stop`` surface; tests inject an in-process fake.
    Stamps use the local wall clock; broker and endpoint stamps are not
    observable from a plain MQTT client, so they equal the publish-ack time.
    """

    def __init__(self, config: MqttConfig | None = None, client_factory: Callable | None = None,
                 deadletter_path: Optional[str | Path] = None,
                 clock: Callable[[], int] = lambda: time.time_ns() // 1000) -> None:
        self.config = config or MqttConfig()
        self.client = (client_factory or _paho_client)(self.config)
        self.deadletter_path = Path(deadletter_path) if deadletter_path else None
        self.clock = clock
        self.sleep = time.sleep

    def publish(self, msg: SafetyMessage, event_id: int, now: int) -> Receipt:
        cfg = self.config
        topic = msg.topic()
        body = json.dumps(denm_envelope(msg, event_id, topic), separators=(",", ":"))
        last_error = "no attempt made"
        for attempt in range(1, cfg.max_attempts + 1):
            if attempt > 1:
                self.sleep(cfg.backoff_ms * 2 ** (attempt - 2) / 1000.0)
            t_pub = self.clock()
            try:
                info = self.client.publish(topic, body, qos=cfg.qos)
                info.wait_for_publish(timeout=cfg.timeout_s)
                if not info.is_published():
                    last_error = "publish not acknowledged"
                    continue
            except (OSError, RuntimeError, ValueError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            t_ack = max(self.clock(), t_pub)
            return Receipt(event_id, topic, attempt, t_pub, t_ack, t_ack)
        record = {"event_id": event_id, "topic": topic, "reason": last_error, "payload": msg.to_dict()}
        if self.deadletter_path is not None:
            with self.deadletter_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        raise TransportDown(f"event {event_id}: {last_error}")

    def close(self) -> None:
        try:
            self.client.loop_stop()
        finally:
            self.client.disconnect()

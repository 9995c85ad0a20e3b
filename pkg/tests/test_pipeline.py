from __future__ import annotations

import dataclasses
import json

import pytest

from conftest import SALT, archived_run
from rnode.errors import MalformedRecord, StageError
from rnode.pipeline import STAGES, PipelineConfig, TransportConfig, bench, commission, resolve_salt, run
from rnode.suite import GEOMETRY, LANE1_X, Y_END, Y_START, dense_traffic_spec
from rnode.synth import ScenarioSpec, VehicleSpec, generate_scenario
from rnode.trace import Scenario, write_trace


@pytest.fixture(scope="module")
def single_vehicle(tmp_path_factory):
    spec = ScenarioSpec(GEOMETRY, (VehicleSpec("solo", ((LANE1_X, Y_START), (LANE1_X, Y_END)), 40.0, 1.0,
                                               plate="KA01AB1234"),),
                        ((0.0, "GREEN"),), duration_s=30.0)
    sc = generate_scenario(spec, seed=1)
    path = tmp_path_factory.mktemp("solo") / "solo.jsonl"
    write_trace(sc, path)
    return sc, path


def test_empty_trace(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    res = run(path, PipelineConfig(salt=SALT), out_dir=tmp_path / "out")
    assert res.report.frames == 0 and res.report.events == 0
    assert res.report.throughput_fps == 0.0
    assert (tmp_path / "out" / "events.jsonl").read_text() == ""
    assert json.loads((tmp_path / "out" / "report.json").read_text())["events"] == 0


def test_header_only_trace(tmp_path):
    path = tmp_path / "h.jsonl"
    write_trace(Scenario(frame_rate=25.0, frame_dims=(100, 100)), path)
    assert run(path, PipelineConfig(salt=SALT)).report.frames == 0


def test_file_run_matches_in_memory_run(tmp_path, suite_clean, base_config):
    sc = suite_clean[0]
    path = tmp_path / "s.jsonl"
    write_trace(sc, path)
    a = run(path, base_config)
    b = archived_run(sc, base_config)
    assert a.event_lines == b.event_lines and a.message_lines == b.message_lines
    assert a.report.evaluation == b.report.evaluation


def test_every_frame_processed(suite_runs_clean, suite_clean):
    for res, sc in zip(suite_runs_clean, suite_clean):
        assert res.report.frames == len(sc.frames)
        assert res.report.throughput_fps > 0
        assert set(res.report.stage_us_per_frame) == set(STAGES)


def test_v2x_isolation(suite_clean, base_config):
    sc = suite_clean[1]
    on = archived_run(sc, base_config)
    off = run(sc, dataclasses.replace(base_config, v2x_enabled=False))
    assert on.event_lines == off.event_lines
    assert off.message_lines == [] and off.report.latency is None


def test_pinned_zones_skip_calibration(suite_clean, base_config):
    sc = suite_clean[1]
    zones = commission(sc, base_config)
    res = archived_run(sc, base_config, zones=zones)
    assert not res.report.zones_derived
    # enforcement starts at frame 0, so at least as many events as the calibrated run
    assert res.report.events >= archived_run(sc, base_config).report.events


def test_no_events_during_calibration(suite_runs_clean, base_config):
    for res in suite_runs_clean:
        assert all(ev.frame_index >= base_config.roi.calibration_frames for ev in res.events)


def test_latency_report_present_and_bounded(suite_runs_clean):
    for res in suite_runs_clean:
        lat = res.report.latency
        assert lat is not None and lat.count == res.report.gate_counts["FORWARD"]
        assert lat.end_to_end.p95_ms < 100


def test_dead_letters_recorded(tmp_path, suite_clean):
    cfg = PipelineConfig(salt=SALT, transport=TransportConfig(drop_prob=1.0))
    res = archived_run(suite_clean[0], cfg, out_dir=tmp_path)
    assert res.report.dead_letters == res.report.gate_counts["FORWARD"] > 0
    lines = (tmp_path / "deadletter.jsonl").read_text().splitlines()
    assert len(lines) == res.report.dead_letters
    assert res.report.latency is None


def test_stage_error_attribution(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format":"rnode-trace/1","frame_rate":30,"width":10,"height":10}\n{"i": "x"}\n')
    for pipelined in (False, True):
        with pytest.raises(StageError) as exc:
            run(path, PipelineConfig(salt=SALT, pipelined=pipelined))
        assert exc.value.stage == "ingest"
        assert isinstance(exc.value.cause, MalformedRecord)


def test_salt_resolution(monkeypatch):
    monkeypatch.delenv("RNODE_SALT", raising=False)
    assert resolve_salt(PipelineConfig(salt=SALT)) == (SALT, "config")
    monkeypatch.setenv("RNODE_SALT", "environment-salt-value")
    assert resolve_salt(PipelineConfig(salt=SALT)) == (b"environment-salt-value", "env")
    monkeypatch.delenv("RNODE_SALT")
    with pytest.warns(RuntimeWarning):
        salt, source = resolve_salt(PipelineConfig())
    assert source == "random" and len(salt) == 32


def test_config_from_dict(tmp_path):
    raw = {
        "tracker": {"max_age": 10},
        "roi": {"calibration_frames": 100, "speed_anchors": [0.2, 0.8]},
        "gate": {"max_rate_hz": 5, "dedup_key": ["msg_type", "plate_hash"]},
        "speed_limit_kmh": 50,
        "camera": {"cam_id": "CAM-7", "px_per_m": 12.5},
        "salt": "a-config-salt-of-length",
        "seed": 3,
        "report_paths": {"out": "ignored"},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    cfg = PipelineConfig.load(path)
    assert cfg.tracker.max_age == 10 and cfg.roi.speed_anchors == (0.2, 0.8)
    assert cfg.gate.dedup_key == ("msg_type", "plate_hash")
    assert cfg.speed_limit_kmh == 50 and cfg.camera.cam_id == "CAM-7"
    assert cfg.salt == b"a-config-salt-of-length" and cfg.seed == 3
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"camera": {"px_per_m": 0}})


def test_bench_structure(single_vehicle):
    sc, path = single_vehicle
    assert len(sc.frames) == 900
    res = bench(path, PipelineConfig(salt=SALT), repetitions=3)
    assert res.repetitions == 3 and res.frames == 900
    table = res.table().splitlines()
    assert len(table) == 1 + 5 + 1
    assert [row.split()[0] for row in table[1:6]] == list(STAGES)
    with pytest.raises(ValueError):
        bench(path, PipelineConfig(salt=SALT), repetitions=2)


def test_bench_throughput_dense_traffic():
    sc = generate_scenario(dense_traffic_spec(), seed=3)
    res = bench(sc, PipelineConfig(salt=SALT), repetitions=3)
    assert res.fps_mean >= 300, res.table()
    assert res.fps_std / res.fps_mean < 0.2, res.table()

from __future__ import annotations

import json

import pytest

from rnode.cli import EXIT_INPUT, EXIT_OK, main
from rnode.suite import suite_specs
from rnode.trace import gt_path_for


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    suite_specs()[0].save(d / "spec.json")
    (d / "config.json").write_text(json.dumps({"salt": "cli-test-salt-0123456789", "seed": 0}))
    assert main(["gen", "--spec", str(d / "spec.json"), "--seed", "0", "--out", str(d / "trace.jsonl")]) == EXIT_OK
    return d


def test_gen_writes_trace_and_truth(workdir):
    assert (workdir / "trace.jsonl").stat().st_size > 0
    assert gt_path_for(workdir / "trace.jsonl").exists()


def test_gen_is_deterministic(workdir, tmp_path):
    out = tmp_path / "again.jsonl"
    assert main(["gen", "--spec", str(workdir / "spec.json"), "--seed", "0", "--out", str(out)]) == EXIT_OK
    assert out.read_bytes() == (workdir / "trace.jsonl").read_bytes()


def test_run_then_eval(workdir, capsys):
    out = workdir / "out"
    rc = main(["run", "--trace", str(workdir / "trace.jsonl"), "--config", str(workdir / "config.json"),
               "--out", str(out)])
    assert rc == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["events"] > 0
    capsys.readouterr()
    rc = main(["eval", "--events", str(out / "events.jsonl"), "--gt", str(gt_path_for(workdir / "trace.jsonl"))])
    assert rc == EXIT_OK
    ev = json.loads(capsys.readouterr().out)
    assert ev["overall"]["recall"] > 0.9


def test_zones_then_pinned_run(workdir):
    zpath = workdir / "zones.json"
    cfg = str(workdir / "config.json")
    assert main(["zones", "--trace", str(workdir / "trace.jsonl"), "--out", str(zpath), "--config", cfg]) == EXIT_OK
    out = workdir / "pinned"
    rc = main(["run", "--trace", str(workdir / "trace.jsonl"), "--config", cfg, "--zones", str(zpath),
               "--out", str(out)])
    assert rc == EXIT_OK
    assert json.loads((out / "report.json").read_text())["zones_derived"] is False


def test_bench_prints_stage_table(workdir, capsys):
    rc = main(["bench", "--trace", str(workdir / "trace.jsonl"), "--reps", "3",
               "--config", str(workdir / "config.json")])
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    for stage in ("ingest", "tracking", "roi", "violations", "v2x"):
        assert stage in text


def test_input_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"format":"rnode-trace/1","frame_rate":30,"width":10,"height":10}\n{"i": 0, "det": "?"}\n')
    assert main(["run", "--trace", str(bad)]) == EXIT_INPUT
    assert main(["run", "--trace", str(tmp_path / "missing.jsonl")]) == EXIT_INPUT
    assert main(["bench", "--trace", str(bad), "--reps", "2"]) == EXIT_INPUT
    assert "rnode:" in capsys.readouterr().err

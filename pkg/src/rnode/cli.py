"""``rnode`` command line: run, gen, eval, bench, zones.

Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import (BBoxOutOfBounds, InfeasibleScript, IoFailure, MalformedRecord, NonMonotonicTime, RnodeError,
                     StageError, WeakSalt)
from .pipeline import PipelineConfig, bench, commission, run
from .roi import ZoneSet
from .trace import read_ground_truth, write_trace
from .violations import ViolationEvent, evaluate

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

_INPUT_ERRORS = (MalformedRecord, NonMonotonicTime, BBoxOutOfBounds, IoFailure, InfeasibleScript, WeakSalt,
                 FileNotFoundError, IsADirectoryError, json.JSONDecodeError, ValueError, KeyError, TypeError)

log = logging.getLogger("rnode")


def _config(path: Optional[str], seed: Optional[int]) -> PipelineConfig:
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _config(args.config, args.seed)
    zones = ZoneSet.load(args.zones) if args.zones else None
    out = Path(args.out) if args.out else None
    res = run(args.trace, cfg, out_dir=out, zones=zones, realtime=args.realtime)
    if out is None:
        for line in res.event_lines:
            print(line)
    print(json.dumps(res.report.to_dict(), indent=1), file=sys.stderr if out is None else sys.stdout)
    return EXIT_OK


def _cmd_gen(args) -> int:
    from .synth import ScenarioSpec, generate_scenario

    scenario = generate_scenario(ScenarioSpec.load(args.spec), args.seed)
    write_trace(scenario, args.out)
    print(f"wrote {len(scenario.frames)} frames, {len(scenario.ground_truth)} ground-truth records to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    events = []
    with open(args.events, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(ViolationEvent.from_record(json.loads(line)))
    report = evaluate(events, read_ground_truth(args.gt), args.slack)
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _config(args.config, None)
    result = bench(args.trace, cfg, args.reps)
    print(result.table())
    return EXIT_OK


def _cmd_zones(args) -> int:
    cfg = _config(args.config, None)
    zones = commission(args.trace, cfg)
    zones.save(args.out)
    print(f"wrote zones to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rnode", description="Edge traffic-violation node over detection traces.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="process a trace end to end")
    r.add_argument("--trace", required=True)
    r.add_argument("--config")
    r.add_argument("--zones", help="pinned ZoneSet JSON; skips calibration")
    r.add_argument("--out", help="directory for events/messages/report")
    r.add_argument("--seed", type=int)
    r.add_argument("--realtime", action="store_true", help="sleep to frame cadence")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen", help="generate a synthetic trace from a scenario spec")
    g.add_argument("--spec", required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    e = sub.add_parser("eval", help="score an event log against ground truth")
    e.add_argument("--events", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--slack", type=int, default=15, help="frame slack around truth spans")
    e.set_defaults(func=_cmd_eval)

    b = sub.add_parser("bench", help="throughput and per-stage timing")
    b.add_argument("--trace", required=True)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--config")
    b.set_defaults(func=_cmd_bench)

    z = sub.add_parser("zones", help="derive and save a ZoneSet (commissioning only)")
    z.add_argument("--trace", required=True)
    z.add_argument("--out", required=True)
    z.add_argument("--config")
    z.set_defaults(func=_cmd_zones)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        cause = exc.cause
        print(f"rnode: {exc}", file=sys.stderr)
        return EXIT_INPUT if isinstance(cause, _INPUT_ERRORS) else EXIT_INTERNAL
    except _INPUT_ERRORS as exc:
        print(f"rnode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RnodeError as exc:
        print(f"rnode: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"rnode: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

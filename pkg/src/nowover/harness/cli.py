"""Command line entry point: ``nowover run|sweep|attack|analyze``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..adversary import AssumptionViolated
from .config import ConfigError, load_config
from .engine import run_crash_attack, run_scenario, run_targeted_attack
from .metrics import analyze, dumps_record, read_jsonl
from .snapshot import SnapshotError, read_state
from .sweeps import sweep_invariants


def _load(path: str, seed: int | None):
    cfg = load_config(path)
    if seed is not None:
        cfg.seed = seed
    return cfg


def _report(result, out) -> int:
    print(dumps_record(result.summary), file=out)
    for step, v in result.sweep_failures[:20]:
        print(f"step {step}: {v}", file=sys.stderr)
    return 0 if result.passed else 1


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    out_dir = Path(args.out) if args.out else None
    result = run_scenario(cfg, out_dir=out_dir, dump_overlay_every=args.dump_overlay)
    return _report(result, sys.stdout)


def cmd_sweep(args) -> int:
    state = read_state(args.state)
    report = sweep_invariants(state)
    for v in report.violations:
        print(v)
    status = ", ".join(f"{k}={'ok' if ok else 'FAIL'}" for k, ok in report.passed().items())
    print(f"{len(report.violations)} violation(s): {status}")
    return 0 if report.ok else 1


def cmd_attack(args) -> int:
    cfg = _load(args.config, args.seed)
    out_dir = Path(args.out) if args.out else None
    if args.preset == "targeted":
        result = run_targeted_attack(cfg, out_dir=out_dir)
    else:
        result = run_crash_attack(cfg, out_dir=out_dir)
    return _report(result, sys.stdout)


def cmd_analyze(args) -> int:
    sys.stdout.write(analyze(read_jsonl(args.metrics)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nowover", description="Clustered overlay simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="directory for metrics, summary and state snapshot")
    run.add_argument("--dump-overlay", type=int, metavar="EVERY", help="write the overlay edge list every EVERY steps")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="check invariants of a state snapshot")
    sw.add_argument("--state", required=True)
    sw.set_defaults(func=cmd_sweep)

    at = sub.add_parser("attack", help="run a scripted attack")
    at.add_argument("--preset", choices=("targeted", "crash"), required=True)
    at.add_argument("--config", required=True)
    at.add_argument("--seed", type=int)
    at.add_argument("--out")
    at.set_defaults(func=cmd_attack)

    an = sub.add_parser("analyze", help="summary tables of a metrics stream")
    an.add_argument("--metrics", required=True)
    an.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    except (AssumptionViolated, SnapshotError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

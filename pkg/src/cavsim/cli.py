"""Command-line front end.

Subcommands:

    cavsim run      --config FILE --out DIR [--seed N]
    cavsim sweep    --config FILE --steps 0.01,0.1,0.5,1.0 --out DIR [--seed N]
    cavsim validate --config FILE

`run` writes trajectory.csv, metrics.csv, and summary.json; `sweep` writes
one subdirectory per prediction step plus sweep.csv. Exit codes: 0 success,
2 configuration error, 3 numeric fault during simulation. The CAVSIM_LOG
environment variable (off|info|debug) controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .config import load_scenario, normalized_dump
from .engine import (
    METRICS_COLUMNS,
    TRAJECTORY_COLUMNS,
    RunResult,
    run,
    sweep_prediction_step,
)
from .errors import ConfigError, NumericFault

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SWEEP_COLUMNS = (
    "prediction_step_s",
    "max_abs_pos_err_m",
    "rms_pos_err_m",
    "mean_step_wallclock_ms",
)


def _setup_logging() -> None:
    level_name = os.environ.get("CAVSIM_LOG", "off").lower()
    if level_name == "debug":
        level = logging.DEBUG
    elif level_name == "info":
        level = logging.INFO
    else:
        level = logging.CRITICAL + 10
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _fmt(value) -> str:
    """Fixed 6-decimal formatting for reproducible golden files."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_trajectory_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in result.trajectory:
            writer.writerow([_fmt(v) for v in row])


def write_metrics_csv(path: Path, result: RunResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in result.metrics:
            writer.writerow([_fmt(v) for v in row])


def write_summary_json(path: Path, result: RunResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_run_outputs(out_dir: Path, result: RunResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out_dir / "trajectory.csv", result)
    write_metrics_csv(out_dir / "metrics.csv", result)
    write_summary_json(out_dir / "summary.json", result)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.config, seed_override=args.seed)
        result = run(scenario)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_run_outputs(Path(args.out), result)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        steps = [float(s) for s in args.steps.split(",") if s.strip()]
    except ValueError:
        print(f"invalid --steps list: {args.steps!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not steps:
        print("empty --steps list", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scenario = load_scenario(args.config, seed_override=args.seed)
        rows, results = sweep_prediction_step(scenario, steps)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for dt_pred, result in results.items():
        _write_run_outputs(out_dir / f"dt_{dt_pred:.6f}", result)
    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in SWEEP_COLUMNS])
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(normalized_dump(scenario))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavsim",
        description="Deterministic connected-vehicle intersection simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run and write outputs")
    p_run.add_argument("--config", required=True, help="scenario file (YAML)")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run once per prediction step")
    p_sweep.add_argument("--config", required=True, help="scenario file (YAML)")
    p_sweep.add_argument("--steps", required=True, help="comma-separated seconds")
    p_sweep.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--config", required=True, help="scenario file (YAML)")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

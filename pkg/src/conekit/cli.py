"""Command-line experiment driver.

Usage: conekit <command> --config PATH [--out DIR] [--seed N] [--threads N]

Exit codes: 0 all assertions pass, 1 an assertion fails, 2 config error,
3 numerical abort (NaN).  Reports are deterministic for a fixed config and
seed; figures are rendered next to the CSV tables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .experiments import COMMANDS, ConfigError

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def preset_path(name: str) -> Path:
    return Path(__file__).parent / "presets" / f"{name}.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conekit",
        description="Verification experiments for measure-valued birth-death "
                    "dynamics on the cone of discrete Radon measures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="JSON config file, or a shipped preset name")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="BLAS thread cap (results are thread-independent)")
    return parser


def _load_config(raw: str) -> dict:
    path = Path(raw)
    if not path.exists():
        candidate = preset_path(raw)
        if candidate.exists():
            path = candidate
        else:
            raise ConfigError(f"config not found: {raw}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    out_dir = Path(args.out)
    try:
        cfg = _load_config(args.config)
        report = COMMANDS[args.command](cfg, out_dir, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    path = report.write(out_dir)
    status = "PASS" if report.passed else "FAIL"
    print(f"{args.command}: {status} ({len(report.verdicts)} checks) -> {path}")
    for v in report.verdicts:
        mark = "ok " if v["passed"] else "FAIL"
        extra = ""
        if "observed" in v:
            extra = f" observed={v['observed']:.3g}"
        if "tolerance" in v:
            extra += f" tolerance={v['tolerance']:.3g}"
        print(f"  [{mark}] {v['name']}{extra}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``run <config>``, ``compare <run-dir> <golden-dir>``, ``list-experiments``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness


def _tolerance(text: str) -> tuple:
    col, _, val = text.partition("=")
    if not col or not val:
        raise argparse.ArgumentTypeError("expected COLUMN=TOL")
    return col, float(val)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kreinlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a key = value config file")
    run.add_argument("config", type=Path)
    cmp_ = sub.add_parser("compare", help="diff CSV artifacts of a run against golden files")
    cmp_.add_argument("run_dir", type=Path)
    cmp_.add_argument("golden_dir", type=Path)
    cmp_.add_argument("--tol", type=_tolerance, action="append", default=[], metavar="COLUMN=TOL")
    cmp_.add_argument("--default-tol", type=float, default=1e-9)
    sub.add_parser("list-experiments", help="list experiment ids")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name, desc in harness.list_experiments():
            print(f"{name:16s} {desc}")
        return 0
    if args.command == "run":
        try:
            cfg = harness.parse_config(args.config.read_text())
        except (OSError, harness.ConfigError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return harness.EXIT_CONFIG
        res = harness.run_experiment(cfg)
        print((res.run_dir / "summary.txt").read_text(), end="")
        return res.status
    try:
        rep = harness.regression_compare(args.run_dir, args.golden_dir, dict(args.tol), args.default_tol)
    except FileNotFoundError as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    for f in rep.files:
        worst = max(f.max_diff.values(), default=0.0)
        print(f"{'PASS' if f.passed else 'FAIL'}  {f.name}  max scaled diff {worst:.3g}")
    for line in rep.lines():
        print("  " + line)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())

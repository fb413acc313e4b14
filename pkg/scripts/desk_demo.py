#!/usr/bin/env python3
"""Desk-scale walkthrough: forward pass, gradient check, and cost accounting
at width 16 on a 64x64 input, printing each report to the terminal.

Usage:
    python scripts/desk_demo.py [--seed 7] [--out reports/]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cefpn import RunConfig, run_suites


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args(argv)

    config = RunConfig(seed=args.seed, suite="all")
    reports = run_suites(config)
    for report in reports:
        print(report.text)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{report.suite}_report.json").write_text(report.to_json())
            (args.out / f"{report.suite}_report.txt").write_text(report.text)
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    raise SystemExit(main())

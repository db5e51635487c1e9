#!/usr/bin/env python3
"""Desk-scale case study: pattern backdoor at 50% poisoning on the synthetic
street-sign set, measured end to end. Prints the report and where it was
written. Expect a few minutes of CPU training.
"""

import argparse
import sys
from pathlib import Path

from rmf.config import load_config
from rmf.runner import print_report, run_measurement

DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "default.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(DEFAULT_CONFIG))
    parser.add_argument("--out", default="out/case_study")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.seed is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, seed=args.seed)

    report, paths = run_measurement(cfg, out_dir=args.out, reuse_baseline=True)
    sys.stdout.write(print_report(report))
    print(f"\nreport: {paths['report_json']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

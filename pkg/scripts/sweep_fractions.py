#!/usr/bin/env python3
"""Sweep the poison fraction and tabulate damage vs effort.

Each row is a full measurement (baseline reused from cache), so runtime
scales with the number of fractions; the tiny preset keeps a full sweep
under a minute.
"""

import argparse
import sys

from rmf.config import load_config, parse_config
from rmf.runner import sweep

TINY = {
    "seed": 1,
    "dataset": {"synthetic": {"class_count": 5, "per_class_train": 16, "per_class_test": 8,
                              "image_size": [16, 16, 3], "noise_std": 0.05}},
    "model": {"class_count": 5, "epochs": 4, "batch_size": 16},
    "attack": {"kind": "pattern_backdoor", "poison_fraction": 0.5, "target_label": 0},
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="run config (default: tiny preset)")
    parser.add_argument("--fractions", default="0,0.1,0.25,0.5,0.75,1.0")
    parser.add_argument("--out", default="out/sweep")
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else parse_config(dict(TINY))
    fractions = [float(f) for f in args.fractions.split(",")]
    rows, csv_path = sweep(cfg, fractions, out_dir=args.out)

    print(f"{'fraction':>9} {'damage':>8} {'class':>9} {'time_s':>8} {'status'}")
    for row in rows:
        damage = f"{float(row['damage']):.3f}" if row["damage"] else "-"
        print(f"{row['fraction']:>9} {damage:>8} {row['class'] or '-':>9} "
              f"{row['time_s'] or '-':>8} {row['status']}")
    print(f"\ncsv: {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

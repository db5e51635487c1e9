"""Command-line entry point.

Subcommands: `measure` runs one full measurement from a config file, `sweep`
repeats it across poison fractions, `selftest` runs the gradient and metric
oracles. Every failure path exits non-zero with one machine-parsable
`error:<category>: message` line on stderr. Set RMF_LOG=debug|info|warning
to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, parse_config
from .data import DataError
from .engine import EngineDivergenceError
from .runner import ReportWriteError, print_report, run_measurement, sweep
from . import selftest

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ENGINE = 4
EXIT_WRITE = 5


def _setup_logging() -> None:
    level_name = os.environ.get("RMF_LOG", "warning").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
              "quiet": logging.ERROR}
    logging.basicConfig(level=levels.get(level_name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_config(path: str, seed: int | None, out: str | None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    return parse_config(raw)


def _parse_fractions(text: str) -> list[float]:
    if not text.strip():
        raise ConfigError("fraction list must be non-empty")
    try:
        fractions = [float(part) for part in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad fraction list '{text}'") from None
    for f in fractions:
        if not 0.0 <= f <= 1.0:
            raise ConfigError(f"fraction {f} outside [0, 1]")
    return fractions


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmf",
                                     description="Measure the risk of poisoning attacks on a small classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    measure = sub.add_parser("measure", help="run one measurement and write report.json/report.txt")
    measure.add_argument("--config", required=True, help="path to the JSON run config")
    measure.add_argument("--seed", type=int, default=None, help="override the run seed")
    measure.add_argument("--out", default=None, help="override the output directory")
    measure.add_argument("--reuse-baseline", action="store_true",
                         help="reuse a cached baseline checkpoint when available")

    sweep_p = sub.add_parser("sweep", help="run measurements across poison fractions, write sweep.csv")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--fractions", required=True, help="comma-separated list, e.g. 0,0.25,0.5")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default=None)

    sub.add_parser("selftest", help="run gradient checks and metric oracles")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "measure":
            cfg = _load_config(args.config, args.seed, args.out)
            report, paths = run_measurement(cfg, reuse_baseline=args.reuse_baseline)
            sys.stdout.write(print_report(report))
            if paths:
                sys.stdout.write(f"wrote: {paths['report_json']}\n")
            return EXIT_OK
        if args.command == "sweep":
            cfg = _load_config(args.config, args.seed, args.out)
            fractions = _parse_fractions(args.fractions)
            rows, csv_path = sweep(cfg, fractions)
            failed = sum(1 for r in rows if r.get("status") != "ok")
            sys.stdout.write(f"wrote: {csv_path} ({len(rows)} rows, {failed} failed)\n")
            return EXIT_OK
        if args.command == "selftest":
            return EXIT_OK if selftest.run_selftest() else EXIT_OTHER
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EngineDivergenceError as exc:
        print(f"error:engine: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except ReportWriteError as exc:
        print(f"error:write: {exc}", file=sys.stderr)
        return EXIT_WRITE
    except Exception as exc:  # pragma: no cover - catch-all for unexpected failures
        print(f"error:internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

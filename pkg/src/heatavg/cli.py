"""Command line entry point: ``heatavg {rate,lemmas,besov,all}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SUITES, ConfigError, StudyConfig, load_config
from .study import StudyError, run_suites


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatavg", description=__doc__)
    parser.add_argument("command", choices=SUITES + ("all",))
    parser.add_argument("--config", help="key = value study configuration file")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="base seed (overrides base_seed)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel replications")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else StudyConfig()
        if args.seed is not None:
            config = config.replace(base_seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"heatavg: {exc}", file=sys.stderr)
        return 2
    suites = config.suites if args.command == "all" else (args.command,)
    out = args.out or config.out_dir
    try:
        status = run_suites(config, suites, out, jobs=max(1, args.jobs))
    except StudyError as exc:
        print(f"heatavg: {exc}", file=sys.stderr)
        return 1
    for name, ok in status.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all(status.values()) else 1

"""Command-line entry point: ``bayessim <experiment> [--config F] [--seed N] ...``."""

import argparse
import sys

from ..errors import ConfigError, ExperimentError
from .config import EXPERIMENTS, load_config
from .experiments import run
from .report import summary_text, write_report

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bayessim",
        description="Run a seeded experiment and write CSV results.")
    parser.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    parser.add_argument("--config", metavar="PATH", help="INI configuration file")
    parser.add_argument("--seed", type=str, help="base seed (overrides the file)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides the file)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config field")
    parser.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.seed, args.out, args.overrides)
        report = run(cfg)
        write_report(report, cfg.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        sys.stdout.write(summary_text(report))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

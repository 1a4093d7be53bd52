"""Command line entry point: run, list, validate."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .harness import BUILTIN_NAMES, load_scenario, run_scenario
from .netsim import ConfigError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptpsim",
        description="Path-specified multipath transport simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in scenario or a scenario file")
    run.add_argument("scenario", help="built-in name or path to a .conf file")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--duration", type=float, default=None)
    run.add_argument("--out", default=None, help="directory for CSVs and report.txt")
    run.add_argument("--override", action="append", default=[],
                     metavar="SECTION.KEY=VALUE")
    run.add_argument("--assert", dest="do_assert", action="store_true",
                     help="exit nonzero if any embedded check fails")

    sub.add_parser("list", help="list built-in scenarios")

    validate = sub.add_parser("validate", help="parse and validate a scenario file")
    validate.add_argument("file")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list":
        for name in BUILTIN_NAMES:
            print(name)
        return EXIT_OK

    if args.command == "validate":
        try:
            scenario = load_scenario(args.file)
        except (ConfigError, OSError) as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        print(f"ok: {scenario.name} ({len(scenario.nodes)} nodes, "
              f"{len(scenario.links)} links, {len(scenario.checks)} checks)")
        return EXIT_OK

    try:
        result = run_scenario(args.scenario, seed=args.seed, duration=args.duration,
                              overrides=args.override, outdir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    print(result.report.report_text())
    if args.do_assert and not result.all_checks_passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

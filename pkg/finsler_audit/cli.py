"""
Command line entry point::

    finsler-audit run sphere.cfg [more.cfg ...] [--output DIR] [--jobs N] [--seed S] [--plots]
    finsler-audit list [--json]
    finsler-audit verify-all [--output DIR] [--jobs N] [--seed S] [--plots]

Exit status is 0 iff every non-informational report passed, 1 otherwise
and 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

from rich.console import Console as RichConsole
from rich.table import Table

from finsler_audit import __version__
from finsler_audit.exceptions import ConfigError
from finsler_audit.reports import all_passed, write_artifacts
from finsler_audit.scenarios import (
    ScenarioConfig,
    bundled_scenarios,
    catalog,
    load_scenarios,
    run_scenario,
    with_seed,
)

logger = RichConsole(file=sys.stderr)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def run_all(configs: Sequence[ScenarioConfig], jobs: int = 1) -> list:
    """Run scenarios, ``jobs`` at a time; results keep the input order."""
    if jobs <= 1 or len(configs) <= 1:
        return [run_scenario(config) for config in configs]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(run_scenario, configs))


def _execute(configs, args) -> int:
    configs = [with_seed(config, args.seed) for config in configs]
    results = run_all(configs, args.jobs)
    write_artifacts(results, args.output, plots=args.plots)
    passed = all_passed(results)
    total = sum(len(result.reports) for result in results)
    failed = sum(not r.passed and not r.informational for result in results for r in result.reports)
    logger.log(f"{len(results)} scenarios, {total} reports, {failed} failed")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_run(args) -> int:
    configs: List[ScenarioConfig] = []
    for path in args.configs:
        configs.extend(load_scenarios(path))
    return _execute(configs, args)


def cmd_verify_all(args) -> int:
    return _execute(bundled_scenarios(), args)


def cmd_list(args) -> int:
    entries = catalog()
    if args.json:
        print(json.dumps(entries, indent=2))
        return EXIT_OK
    table = Table(title="bundled scenarios")
    table.add_column("name")
    table.add_column("file")
    table.add_column("claims")
    table.add_column("expected runtime")
    for entry in entries:
        table.add_row(entry["name"], entry["file"], ", ".join(entry["claims"]), entry["expected_runtime"])
    RichConsole().print(table)
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finsler-audit",
        description="Audit Bochner, Poincaré, log-Sobolev and volume inequalities on Finsler charts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    runner = argparse.ArgumentParser(add_help=False)
    runner.add_argument("--output", default="audit-output", help="directory for the artifacts")
    runner.add_argument("--jobs", type=_positive_int, default=1, help="scenarios run in parallel")
    runner.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    runner.add_argument("--plots", action="store_true", help="write SVG decay plots")

    run = sub.add_parser("run", parents=[runner], help="run the scenarios of one or more files")
    run.add_argument("configs", nargs="+", help="scenario files")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify-all", parents=[runner], help="run every bundled scenario")
    verify.set_defaults(func=cmd_verify_all)

    listing = sub.add_parser("list", help="show the bundled scenarios")
    listing.add_argument("--json", action="store_true", help="machine-readable catalog")
    listing.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.log(f"configuration error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

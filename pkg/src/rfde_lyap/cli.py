"""Command-line interface.

Subcommands: run, replay, list-systems, list-functionals.
"""

from __future__ import annotations

import argparse
import sys

from . import harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfde-lyap",
        description=(
            "Simulate uncertain delay systems and run sampling-based "
            "Lyapunov stability checks"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario JSON file")
    run.add_argument("scenario", help="path to the scenario file")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument(
        "--grid-step", type=float, default=None, help="override the grid step"
    )
    run.add_argument("--quiet", action="store_true", help="suppress console output")

    rep = sub.add_parser("replay", help="re-run a check recorded in a report")
    rep.add_argument("report", help="path to an emitted report.json")
    rep.add_argument("--check", required=True, help="result name to re-run")
    rep.add_argument("--quiet", action="store_true")

    sub.add_parser("list-systems", help="print the built-in system names")
    sub.add_parser("list-functionals", help="print the built-in functional names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return harness.run_scenario(
            args.scenario,
            out_dir=args.out,
            seed=args.seed,
            grid_step=args.grid_step,
            quiet=args.quiet,
        )
    if args.command == "replay":
        return harness.replay(args.report, args.check, quiet=args.quiet)
    if args.command == "list-systems":
        print("\n".join(harness.list_systems()))
        return 0
    if args.command == "list-functionals":
        print("\n".join(harness.list_functionals()))
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())

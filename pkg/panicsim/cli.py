"""Command line entry point, installed as ``panic-sim``.

Exit codes: 0 success, 1 parse or validation failure, 2 runtime failure.
"""
import argparse
import logging
import pathlib
import sys
from typing import Optional, Sequence

from .api import save_run, simulate, sweep, with_overrides
from .exceptions import (
    BlockedError,
    NonFiniteForce,
    ParseError,
    PlacementError,
    SemanticError,
    UnreachableError,
    ValidationFailed,
)
from .model import validate_scenario
from .scenario_io import load_scenario, write_nav_field
from .spatial import build_nav_field

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

_INVALID = (ParseError, SemanticError, ValidationFailed, UnreachableError, KeyError)
_RUNTIME = (PlacementError, NonFiniteForce, BlockedError, OSError, ValueError)


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")

    return parse


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panic-sim",
        description="Crowd evacuation with physical strength consumption and panic contagion.",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    check = commands.add_parser("validate", help="check a scenario file and print the report")
    check.add_argument("--scenario", type=pathlib.Path, required=True)

    single = commands.add_parser("run", help="simulate a scenario and write its output files")
    single.add_argument("--scenario", type=pathlib.Path, required=True)
    single.add_argument("--out", type=pathlib.Path, required=True, help="output directory")
    single.add_argument("--seed", type=int, default=None)
    single.add_argument("--dt", type=float, default=None, help="time step in seconds")
    single.add_argument("--max-time", type=float, default=None, help="horizon in seconds")
    single.add_argument("--output-every", type=int, default=None, help="sampling in ticks")
    single.add_argument("--workers", type=int, default=1, help="threads for per-agent stages")

    many = commands.add_parser("sweep", help="one run per (value, seed) of a model constant")
    many.add_argument("--scenario", type=pathlib.Path, required=True)
    many.add_argument("--out", type=pathlib.Path, required=True, help="sweep root directory")
    many.add_argument("--param", required=True, help="model constant to vary, e.g. beta")
    many.add_argument("--values", type=_csv_list(float), required=True, help="V1,V2,...")
    many.add_argument("--seeds", type=_csv_list(int), default=None, help="S1,S2,...")
    many.add_argument("--workers", type=int, default=1, help="cells run in parallel")

    nav = commands.add_parser("navfield", help="write the exit-distance field of a scenario")
    nav.add_argument("--scenario", type=pathlib.Path, required=True)
    nav.add_argument("--out", type=pathlib.Path, required=True, help="output file")
    return parser


def _validate(args) -> int:
    report = validate_scenario(load_scenario(args.scenario, validate=False))
    print(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def _run(args) -> int:
    spec = with_overrides(
        args.scenario,
        seed=args.seed,
        dt=args.dt,
        max_time=args.max_time,
        output_every=args.output_every,
    )
    result = simulate(spec, workers=args.workers)
    save_run(result, args.out)
    print(f"evacuation_time {result.metrics.evacuation_time:g}")
    return EXIT_OK


def _sweep(args) -> int:
    summary = sweep(
        args.scenario, args.out, args.param, args.values, seeds=args.seeds, workers=args.workers
    )
    print(f"{len(summary)} runs written to {args.out}")
    return EXIT_OK


def _navfield(args) -> int:
    spec = load_scenario(args.scenario)
    write_nav_field(build_nav_field(spec), args.out)
    return EXIT_OK


def _describe(exc: Exception) -> str:
    if isinstance(exc, KeyError) and exc.args:
        return str(exc.args[0])
    return str(exc)


_COMMANDS = {"validate": _validate, "run": _run, "sweep": _sweep, "navfield": _navfield}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if not exc.code else EXIT_INVALID

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )

    try:
        return _COMMANDS[args.command](args)
    except _INVALID as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_INVALID
    except _RUNTIME as exc:
        logger.debug("run failed", exc_info=True)
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

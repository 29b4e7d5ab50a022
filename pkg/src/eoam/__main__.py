"""Entry point: eoam {precompute,run,sweep,validate} (or python -m eoam)."""

from __future__ import annotations

import argparse
import sys

import structlog
from pydantic import ValidationError

from .commands import EXIT_DATAERR, EXIT_USAGE, UsageError
from .config import ConfigError, EoamSettings
from .logging_config import setup_logging

log = structlog.get_logger()


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eoam", description="Emergency obstacle avoidance maneuver simulation")
    parser.add_argument(
        "--log-level", default=None, type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Log level (default: INFO)",
    )
    parser.add_argument("--log-dir", default=None, help="Log directory (default: logs)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pre = sub.add_parser("precompute", help="Build lookup tables and phase diagrams")
    pre.add_argument("--vehicle", default=None, help="Vehicle TOML (default: configs/vehicle.toml)")
    pre.add_argument("--grid", default=None, help="Grid TOML (default: configs/grid.toml)")
    pre.add_argument("--out", default=None, help="Output tables directory (default: tables)")
    pre.add_argument("--workers", type=int, default=None, help="Worker processes (default: one per core)")

    run = sub.add_parser("run", help="Run one closed-loop scenario")
    run.add_argument("--scenario", default=None, help="Scenario TOML")
    run.add_argument("--tables", default=None, help="Tables directory")
    run.add_argument("--out", default=None, help="Output directory")
    run.add_argument("--dump-plots", action="store_true", help="Also write per-plot channel CSVs")

    sweep = sub.add_parser("sweep", help="Run the speed × mu × oncoming matrix")
    sweep.add_argument("--matrix", default=None, help="Matrix TOML")
    sweep.add_argument("--tables", default=None, help="Tables directory")
    sweep.add_argument("--out", default=None, help="Output directory")
    sweep.add_argument("--parallel", type=int, default=None, help="Worker processes (default: one per core)")
    sweep.add_argument("--traces", action="store_true", help="Write y(x) traces per cell")

    val = sub.add_parser("validate", help="Re-check persisted tables and diagrams")
    val.add_argument("--tables", default=None, help="Tables directory")
    val.add_argument("--samples", type=int, default=None, help="Random samples per page for the sector check")
    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)

    try:
        config = EoamSettings()
    except ValidationError as exc:
        print(f"eoam: bad EOAM_ environment setting: {exc}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    if args.log_level:
        config.log_level = args.log_level
    if args.log_dir:
        config.log_dir = args.log_dir
    if getattr(args, "workers", None):
        config.workers = args.workers
    if getattr(args, "parallel", None):
        config.workers = args.parallel

    setup_logging(config.log_dir, config.log_level)

    from . import commands

    try:
        if args.command == "precompute":
            code = commands.cmd_precompute(
                args.vehicle or config.vehicle_config,
                args.grid or config.grid_config,
                args.out or config.tables_dir,
                workers=config.worker_count(),
            )
        elif args.command == "run":
            code = commands.cmd_run(
                args.scenario or config.scenario_config,
                args.tables or config.tables_dir,
                args.out or config.out_dir,
                dump_plots=args.dump_plots,
            )
            print(f"outcome exit code: {code}")
        elif args.command == "sweep":
            code = commands.cmd_sweep(
                args.matrix or config.matrix_config,
                args.tables or config.tables_dir,
                args.out or config.out_dir,
                workers=config.worker_count(),
                traces=args.traces,
                db_name=config.result_db_name,
            )
        else:
            samples = args.samples if args.samples is not None else commands.PARTITION_SAMPLES
            code, problems = commands.cmd_validate(args.tables or config.tables_dir, samples)
            for problem in problems:
                print(problem)
            print("validation passed" if not problems else f"{len(problems)} problem(s)")
    except UsageError as exc:
        print(f"eoam: usage error: {exc}", file=sys.stderr)
        sys.exit(EXIT_USAGE)
    except (ConfigError, ValueError, OSError) as exc:
        log.error("command_failed", command=args.command, error=str(exc))
        print(f"eoam: {exc}", file=sys.stderr)
        sys.exit(EXIT_DATAERR)
    sys.exit(code)


if __name__ == "__main__":
    main()

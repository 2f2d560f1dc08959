"""Entry point for ``python -m selene`` and the ``selene`` CLI command.

Usage:
    selene search --preset desk [--workers 8]     Run a sweep
    selene resume runs/desk                        Continue an interrupted sweep
    selene export-maps runs/desk/catalog.jsonl     Write the four map CSVs
    selene branches runs/desk/catalog.jsonl        Band reports and slopes
    selene propagate --alpha pi/3 --beta 1.407 --tof 2.5
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from selene import __version__
from selene.analysis import MAPS
from selene.config import RunConfig, load_config, load_preset, parse_angle
from selene.errors import EXIT_INTERNAL, EXIT_INTERRUPTED, EXIT_OK, ConfigError, SeleneError
from selene.transfer import ConstructionParams

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger("selene")


def _angle(text: str) -> float:
    try:
        return parse_angle(text)
    except ConfigError as err:
        raise argparse.ArgumentTypeError(err.message) from None


def _add_config_args(p: argparse.ArgumentParser, required: bool = False) -> None:
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument("--config", type=Path, help="YAML run configuration")
    group.add_argument("--preset", help="shipped configuration: full, desk, geo")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="selene",
        description="Bi-impulsive Earth-Moon transfers: grid search, correction and solution maps",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = ap.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a full sweep")
    _add_config_args(p)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--alpha-step", type=_angle)
    p.add_argument("--beta-step", type=float)
    p.add_argument("--tof-step", type=_angle)
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--screen", type=float, metavar="PSI", help="only correct guesses with |psi_f| below PSI")

    p = sub.add_parser("resume", help="continue an interrupted sweep")
    p.add_argument("checkpoint", type=Path, help="checkpoint file or run directory")
    _add_config_args(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--checkpoint-interval", type=int)

    p = sub.add_parser("export-maps", help="write solution maps as CSV")
    p.add_argument("catalog", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--maps", nargs="+", choices=sorted(MAPS))

    p = sub.add_parser("branches", help="TOF band decomposition per alpha")
    p.add_argument("catalog", type=Path)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--alpha", type=_angle, action="append", help="restrict to this alpha (repeatable)")
    p.add_argument("--threshold", type=float, default=10.0, help="gap threshold in days")
    p.add_argument("--min-solutions", type=int, default=30)
    p.add_argument("--separation", type=float, default=15.0, help="inter-band separation in days")

    p = sub.add_parser("propagate", help="propagate one guess and write its trajectory")
    _add_config_args(p)
    p.add_argument("--alpha", type=_angle)
    p.add_argument("--beta", type=float)
    p.add_argument("--tof", type=_angle)
    p.add_argument("--catalog", type=Path, help="take the parameters from a catalog record")
    p.add_argument("--id", type=int, dest="solution_id")
    p.add_argument("--samples", type=int, default=2001)
    p.add_argument("--out", type=Path, default=Path("trajectory.csv"))
    return ap


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _config(args: argparse.Namespace) -> RunConfig:
    if getattr(args, "config", None) is not None:
        return load_config(args.config)
    if getattr(args, "preset", None) is not None:
        return load_preset(args.preset)
    return RunConfig().validate()


def _run(args: argparse.Namespace) -> None:
    from selene import runner

    if args.command == "search":
        config = _config(args).override(
            output_dir=args.output_dir,
            workers=args.workers,
            checkpoint_interval=args.checkpoint_interval,
            screen_threshold=args.screen,
            alpha_step=args.alpha_step,
            beta_step=args.beta_step,
            tof_step=args.tof_step,
        )
        print(runner.cmd_search(config).describe())

    elif args.command == "resume":
        config = _config(args) if (args.config or args.preset) else None
        print(runner.cmd_resume(args.checkpoint, config, args.workers, args.checkpoint_interval).describe())

    elif args.command == "export-maps":
        out_dir = args.out_dir or args.catalog.parent / "maps"
        for name, path in runner.cmd_export(args.catalog, out_dir, args.maps).items():
            print(f"{name}: {path}")

    elif args.command == "branches":
        out_dir = args.out_dir or args.catalog.parent
        census = runner.cmd_branches(
            args.catalog, out_dir, args.alpha, args.threshold, args.min_solutions, args.separation,
        )
        summary = census.slopes()
        print(f"alphas            {len(census.reports)} ({len(census.populated)} populated)")
        print(f"modal band count  {census.modal_band_count}")
        print(f"median spacing    {census.median_spacing:.2f} days")
        print(f"separated         {census.separated_fraction:.1%}")
        print(f"mean slope        {summary.mean_slope:.6f} rad/day")

    elif args.command == "propagate":
        config = _config(args)
        if args.catalog is not None:
            if args.solution_id is None:
                raise ConfigError("--catalog needs --id")
            params = runner.params_from_catalog(args.catalog, args.solution_id)
        else:
            if None in (args.alpha, args.beta, args.tof):
                raise ConfigError("give --alpha, --beta and --tof, or --catalog with --id")
            params = ConstructionParams(args.alpha, args.beta, args.tof)
        report = runner.cmd_propagate(params, config.orbit, args.out, args.samples)
        print(f"{report.terminated_by} at t = {report.time:.9f} TU; |psi_f| = {report.psi_f_norm:.3e}; wrote {report.path}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        _run(args)
    except SeleneError as err:
        print(err.format(), file=sys.stderr)
        return err.exit_code
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

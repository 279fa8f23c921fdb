from __future__ import annotations

import argparse
import logging
from typing import Optional, Sequence

from config import AppConfig, load_config
from osmoid import __version__
from osmoid.commands import run_commands
from osmoid.errors import OsmoidError
from osmoid.services.config_service import RunConfig, apply_defaults, apply_overrides, load_run_config

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="osmoid",
        description="Adaptive-observer identification of osmotic-shock responses.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="YAML run config (or a run manifest)")
    common.add_argument("--preset", type=str, default=None, help="named run preset")
    common.add_argument("--out-dir", dest="out_dir", type=str, default=None, help="output root directory")
    common.add_argument("--dt", type=float, default=None, help="integration step in minutes")
    common.add_argument("--law-variant", dest="law_variant", default=None,
                        choices=("paper-literal", "lyapunov-corrected"))
    common.add_argument("--workers", type=int, default=None, help="parallel sweep workers")
    common.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None,
                        help="write SVG charts next to the trace")
    common.add_argument("--validate", action=argparse.BooleanOptionalAction, default=None,
                        help="replay the identified model and record its prediction error")

    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    run_commands.setup(subparsers, common)
    return parser


def resolve_run_config(args: argparse.Namespace, app_config: AppConfig) -> RunConfig:
    preset = args.preset
    if args.config is None and preset is None:
        preset = args.default_preset
    config = load_run_config(args.config, preset)
    config = apply_defaults(config, app_config)
    if args.config is None and args.out_dir is None:
        config = apply_overrides(config, out_dir=str(app_config.output.root))
    if args.plot is None and args.config is None:
        config = apply_overrides(config, plot=app_config.output.plot)
    if args.workers is None and args.config is None and app_config.workers > 1:
        config = apply_overrides(config, workers=app_config.workers)
    return apply_overrides(
        config,
        out_dir=args.out_dir,
        dt=args.dt,
        law_variant=args.law_variant,
        workers=args.workers,
        plot=args.plot,
        validate=args.validate,
    )


def main(argv: Optional[Sequence[str]] = None, app_config: Optional[AppConfig] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    app_config = app_config or load_config()

    if args.command == "report":
        return run_commands.cmd_report(args.path)

    try:
        config = resolve_run_config(args, app_config)
    except OsmoidError as exc:
        log.error("invalid configuration: %s", exc)
        return exc.exit_code
    return run_commands.HANDLERS[args.command](config)

from __future__ import annotations

import argparse
import functools
import logging
from pathlib import Path
from typing import Callable, Union

from osmoid.errors import OsmoidError
from osmoid.services.config_service import RunConfig
from osmoid.services.run_service import execute_identify, execute_simulate, execute_sweep, report

log = logging.getLogger(__name__)


def _exit_codes(handler: Callable[..., int]) -> Callable[..., int]:
    """Turn toolkit errors into the documented exit codes."""

    @functools.wraps(handler)
    def wrapper(*args, **kwargs) -> int:
        try:
            return handler(*args, **kwargs)
        except OsmoidError as exc:
            log.error("%s failed: %s", handler.__name__, exc)
            return exc.exit_code

    return wrapper


@_exit_codes
def cmd_simulate(config: RunConfig) -> int:
    result = execute_simulate(config)
    log.info("simulate: %d samples in %s", len(result.trace), result.run_dir)
    return 0


@_exit_codes
def cmd_identify(config: RunConfig) -> int:
    # a run that does not converge is still a completed run
    result = execute_identify(config)
    log.info("identify: verdict converged=%s in %s", result.verdict.converged, result.run_dir)
    return 0


@_exit_codes
def cmd_sweep(config: RunConfig) -> int:
    result = execute_sweep(config)
    failures = result.failures
    if failures:
        log.error("sweep: %d of %d runs failed", len(failures), len(result.rows))
        return max(int(row.get("exit_code") or 1) for row in failures)
    log.info("sweep: %d runs in %s", len(result.rows), result.sweep_dir)
    return 0


@_exit_codes
def cmd_report(path: Union[str, Path]) -> int:
    written = report(Path(path))
    log.info("report: %d plot(s) under %s", len(written), path)
    return 0


def setup(subparsers: argparse._SubParsersAction, parent: argparse.ArgumentParser) -> None:
    simulate = subparsers.add_parser("simulate", parents=[parent], help="simulate a plant under a stimulus")
    simulate.set_defaults(command="simulate", default_preset="fig3-like")

    identify = subparsers.add_parser("identify", parents=[parent], help="run an adaptive estimator")
    identify.set_defaults(command="identify", default_preset=None)

    sweep = subparsers.add_parser("sweep", parents=[parent], help="repeat identify over periods or gains")
    sweep.set_defaults(command="sweep", default_preset="paper-protocol")

    report_parser = subparsers.add_parser("report", help="regenerate plots for a run or sweep directory")
    report_parser.add_argument("path", type=Path)
    report_parser.set_defaults(command="report")


HANDLERS = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "sweep": cmd_sweep,
}

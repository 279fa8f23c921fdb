from __future__ import annotations

from typing import Optional


class OsmoidError(Exception):
    """Base class for every error the toolkit raises on purpose."""

    exit_code: int = 1


class ConfigError(OsmoidError, ValueError):
    exit_code = 2


class IntegrationDivergedError(OsmoidError, ArithmeticError):
    exit_code = 3

    def __init__(self, t: float, step: Optional[int] = None, detail: str = "non-finite state component"):
        self.t = t
        self.step = step
        where = f"t={t:.6g} min" if step is None else f"t={t:.6g} min (step {step})"
        super().__init__(f"integration diverged at {where}: {detail}")


class DatasetError(OsmoidError):
    exit_code = 4


class TraceError(OsmoidError, ValueError):
    """Raised for queries a trace cannot answer (empty trace, no true parameters)."""

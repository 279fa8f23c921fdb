from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv


@dataclass(slots=True)
class OutputConfig:
    root: Path = Path("runs")
    plot: bool = True


@dataclass(slots=True)
class IntegrationDefaults:
    dt: float = 0.001
    scheme: str = "rk4"


@dataclass(slots=True)
class AppConfig:
    output: OutputConfig = field(default_factory=OutputConfig)
    integration: IntegrationDefaults = field(default_factory=IntegrationDefaults)
    workers: int = 1
    log_level: str = "INFO"


def _ensure_env_loaded() -> None:
    """
    Load `.env` first from the working directory, then from the directory
    holding this file.
    """
    candidates = [
        Path(".env"),
        Path(__file__).resolve().parent / ".env",
    ]
    for path in candidates:
        if path.exists():
            load_dotenv(dotenv_path=path)
            break


def load_config() -> AppConfig:
    _ensure_env_loaded()

    output = OutputConfig(
        root=Path(os.getenv("OSMOID_OUTPUT_ROOT", "runs")),
        plot=_read_bool("OSMOID_PLOT", default=True),
    )

    dt = _read_float("OSMOID_DT")
    integration = IntegrationDefaults(
        dt=dt if dt is not None and dt > 0 else 0.001,
        scheme=os.getenv("OSMOID_SCHEME", "rk4").strip().lower() or "rk4",
    )

    return AppConfig(
        output=output,
        integration=integration,
        workers=max(1, _read_int("OSMOID_WORKERS") or 1),
        log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
    )


def _read_int(env_key: str) -> Optional[int]:
    value = os.getenv(env_key)
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        return None


def _read_float(env_key: str) -> Optional[float]:
    value = os.getenv(env_key)
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        return None


def _read_bool(env_key: str, default: bool = False) -> bool:
    raw = os.getenv(env_key)
    if raw is None:
        return default
    return raw.strip().lower() not in {"0", "false", "off", "no"}

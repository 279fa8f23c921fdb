from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from osmoid import __version__
from osmoid.errors import DatasetError

PathLike = Union[str, Path]
MANIFEST_NAME = "manifest.json"


def build_manifest(
    run_config: Mapping[str, Any],
    verdict: Optional[Mapping[str, Any]],
    final_params: Optional[Mapping[str, float]] = None,
    artifacts: Optional[Mapping[str, str]] = None,
    mode: str = "identify",
    resolved: Optional[Mapping[str, Any]] = None,
    prediction: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Self-contained record of a run; `config` alone is enough to replay it.
    `resolved` carries the stimulus and plant as built, overriding the config sections.
    """
    estimator = run_config.get("estimator") or {}
    resolved = resolved or {}
    return {
        "toolkit": {"name": "osmoid", "version": __version__},
        "mode": mode,
        "config": dict(run_config),
        "stimulus": resolved.get("stimulus", run_config.get("stimulus")),
        "plant": resolved.get("plant", run_config.get("plant")),
        "dataset": run_config.get("dataset"),
        "estimator": estimator.get("kind"),
        "gains": run_config.get("gains"),
        "law_variant": run_config.get("law_variant"),
        "grid": run_config.get("grid"),
        "final_params": dict(final_params) if final_params is not None else None,
        "verdict": dict(verdict) if verdict is not None else None,
        "artifacts": dict(artifacts or {}),
        "prediction": dict(prediction) if prediction is not None else None,
    }


def write_manifest(
    run_config: Mapping[str, Any],
    verdict: Optional[Mapping[str, Any]],
    path: PathLike,
    **extra: Any,
) -> Dict[str, Any]:
    path = Path(path)
    manifest = build_manifest(run_config, verdict, **extra)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot write manifest to {path}: {exc}") from exc
    return manifest


def read_manifest(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetError(f"manifest not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"unreadable manifest {path}: {exc}") from exc

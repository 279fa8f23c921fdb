from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Union

import numpy as np
import pandas as pd

from osmoid.errors import DatasetError
from store.models import SECOND_ORDER_COLUMNS, TRACE_COLUMNS, Dataset, RunTrace

log = logging.getLogger(__name__)

PathLike = Union[str, Path]
DATASET_COLUMNS = ("t", "u", "y")
DEFAULT_DIGITS = 9


def _read_metadata(path: Path) -> Dict[str, str]:
    """`# key: value` lines before the header."""
    metadata: Dict[str, str] = {}
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            stripped = line.strip()
            if not stripped:
                continue
            if not stripped.startswith("#"):
                break
            key, sep, value = stripped.lstrip("#").partition(":")
            if sep and key.strip():
                metadata[key.strip()] = value.strip()
    return metadata


def read_timeseries_csv(path: PathLike) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    try:
        metadata = _read_metadata(path)
        frame = pd.read_csv(path, comment="#", dtype=str, skipinitialspace=True, keep_default_na=False)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetError(f"failed to read dataset {path}: {exc}") from exc

    frame.columns = [str(column).strip() for column in frame.columns]
    missing = [column for column in DATASET_COLUMNS if column not in frame.columns]
    if missing:
        raise DatasetError(f"{path}: missing column(s) {', '.join(missing)}; header must contain t,u,y")

    values: Dict[str, np.ndarray] = {}
    for column in DATASET_COLUMNS:
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(parsed))
        if bad.size:
            row = int(bad[0])
            raise DatasetError(f"{path}: unparsable number {raw.iloc[row]!r} at row {row + 1}, column {column}")
        values[column] = parsed

    steps = np.flatnonzero(np.diff(values["t"]) <= 0)
    if steps.size:
        raise DatasetError(f"{path}: t is not strictly increasing at row {int(steps[0]) + 2}")

    log.info("read %d samples from %s", len(frame), path)
    return Dataset(name=path.stem, t=values["t"], u=values["u"], y=values["y"], metadata=metadata)


def write_trace_csv(trace: RunTrace, path: PathLike, digits: int = DEFAULT_DIGITS) -> None:
    path = Path(path)
    frame = pd.DataFrame(trace.columns())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=f"%.{digits}g", lineterminator="\n")
    except OSError as exc:
        raise DatasetError(f"cannot write trace to {path}: {exc}") from exc


def read_trace_csv(path: PathLike) -> RunTrace:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"trace file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=float)
    except (OSError, ValueError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DatasetError(f"failed to read trace {path}: {exc}") from exc

    missing = [column for column in TRACE_COLUMNS if column not in frame.columns]
    if missing:
        raise DatasetError(f"{path}: not a trace file, missing {', '.join(missing)}")
    extra: Dict[str, Any] = {}
    if all(column in frame.columns for column in SECOND_ORDER_COLUMNS):
        extra = {column: frame[column].to_numpy() for column in SECOND_ORDER_COLUMNS}
    return RunTrace(
        t=frame["t"].to_numpy(),
        u=frame["u"].to_numpy(),
        y=frame["y"].to_numpy(),
        y_hat=frame["yhat"].to_numpy(),
        e=frame["e"].to_numpy(),
        a_hat=frame["a_hat"].to_numpy(),
        b_hat=frame["b_hat"].to_numpy(),
        c_hat=frame["c_hat"].to_numpy(),
        **extra,
    )


def write_summary_csv(rows: Iterable[Mapping[str, Any]], path: PathLike) -> None:
    rows = list(rows)
    columns: List[str] = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    frame = pd.DataFrame(rows, columns=columns or ["index"])
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=f"%.{DEFAULT_DIGITS}g", lineterminator="\n")
    except OSError as exc:
        raise DatasetError(f"cannot write summary to {path}: {exc}") from exc


from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams.update({"svg.hashsalt": "osmoid", "axes.unicode_minus": False})
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from osmoid.errors import ConfigError, DatasetError  # noqa: E402
from store.models import RunTrace  # noqa: E402

log = logging.getLogger(__name__)

MARGIN = 0.05
MAX_POINTS = 4000
FIGSIZE = (9.0, 5.0)

ERROR_CHANNELS = ("e", "e1", "e2", "eps")
PARAMETER_CHANNELS = ("a_hat", "b_hat", "c_hat")


@dataclass(slots=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def _decimate(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    stride = max(1, math.ceil(x.size / MAX_POINTS))
    if stride == 1:
        return x, y
    index = np.arange(0, x.size, stride)
    if index[-1] != x.size - 1:
        index = np.append(index, x.size - 1)
    return x[index], y[index]


def build_figure(series: Sequence[Series], title: str, x_label: str, y_label: str) -> Figure:
    """One line per series; each line's SVG group id is its label."""
    if not series:
        raise ConfigError("a chart needs at least one series")
    fig, ax = plt.subplots(figsize=FIGSIZE, constrained_layout=True)
    for item in series:
        x, y = _decimate(np.asarray(item.x, dtype=float), np.asarray(item.y, dtype=float))
        ax.plot(x, y, linewidth=1.2, label=item.label, gid=item.label)
    ax.margins(MARGIN)
    ax.set_title(title)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    return fig


def _save(fig: Figure, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise DatasetError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def emit_plot(trace: RunTrace, channels: Iterable[str], path: Union[str, Path], title: str = "") -> None:
    channels = list(channels)
    if not channels:
        raise ConfigError("emit_plot needs at least one channel")
    series = []
    for name in channels:
        if name == "t":
            raise ConfigError("t is the x axis, not a channel")
        try:
            values = trace.channel(name)
        except KeyError:
            raise ConfigError(f"unknown channel {name!r}") from None
        series.append(Series(label=name, x=np.asarray(trace.t, dtype=float), y=np.asarray(values, dtype=float)))
    path = Path(path)
    _save(build_figure(series, title or path.stem, "t [min]", ", ".join(channels)), path)
    log.info("wrote %s (%s)", path, ", ".join(channels))


def emit_series_plot(series: Sequence[Series], path: Union[str, Path], title: str, y_label: str) -> None:
    path = Path(path)
    _save(build_figure(series, title, "t [min]", y_label), path)
    log.info("wrote %s (%d series)", path, len(series))


def error_channels(trace: RunTrace) -> List[str]:
    return [name for name in ERROR_CHANNELS if name == "e" or (trace.is_second_order and name in trace.columns())]

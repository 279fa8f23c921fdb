from __future__ import annotations

import numpy as np

from osmoid.errors import ConfigError, TraceError


def trailing_window(values: np.ndarray, fraction: float) -> np.ndarray:
    """Last floor(n * fraction) samples, at least one."""
    if not 0 < fraction <= 0.5:
        raise ConfigError(f"window_fraction must lie in (0, 0.5], got {fraction}")
    n = len(values)
    if n == 0:
        raise TraceError("empty trace")
    size = max(1, int(n * fraction + 1e-9))
    return np.asarray(values[n - size:], dtype=float)


def window_length(n: int, fraction: float) -> int:
    return max(1, int(n * fraction + 1e-9))


def smoothed_derivative(t: np.ndarray, x: np.ndarray, span: int = 5) -> np.ndarray:
    """
    Centered difference over `span` samples (x[i+h] - x[i-h]) / (t[i+h] - t[i-h]), h = span // 2.
    Samples closer than h to either end use numpy's second-order gradient instead.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if t.size < 2:
        raise TraceError("need at least two samples to differentiate")
    half = max(1, span // 2)
    rate = np.gradient(x, t, edge_order=2 if t.size > 2 else 1)
    if t.size > 2 * half:
        rate[half:-half] = (x[2 * half:] - x[: -2 * half]) / (t[2 * half:] - t[: -2 * half])
    return rate


def relative_spread(values: np.ndarray, floor: float = 1e-6) -> float:
    """(max - min) / max(|mean|, floor)"""
    values = np.asarray(values, dtype=float)
    return float((values.max() - values.min()) / max(abs(float(values.mean())), floor))

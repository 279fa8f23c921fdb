from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from osmoid.errors import ConfigError

# u = 1.0 encodes a 0.2 M NaCl pulse.
MOLARITY_PER_UNIT = 0.2
DEFAULT_RISE_TIME = 0.05


class StimulusKind(str, Enum):
    SQUARE = "square"
    STEP = "step"
    CONSTANT = "constant"
    SAMPLES = "piecewise-from-samples"


@dataclass(slots=True, frozen=True)
class ProtocolEntry:
    period: float
    n_periods: int

    @property
    def duration(self) -> float:
        return self.period * self.n_periods


_PROTOCOL: Tuple[Tuple[int, int], ...] = ((2, 10), (4, 8), (8, 8), (16, 6), (32, 4), (64, 4))


def protocol_table() -> list[ProtocolEntry]:
    """Square-wave periods (minutes) and repeat counts of the shock protocol."""
    return [ProtocolEntry(period=float(period), n_periods=count) for period, count in _PROTOCOL]


def protocol_entry(period: float) -> Optional[ProtocolEntry]:
    for entry in protocol_table():
        if entry.period == period:
            return entry
    return None


@dataclass(slots=True, frozen=True)
class Stimulus:
    kind: StimulusKind = StimulusKind.SQUARE
    amplitude: float = 1.0
    period: float = 2.0
    duty: float = 0.5
    rise_time: float = DEFAULT_RISE_TIME
    n_periods: int = 1
    t_start: float = 0.0
    molarity_per_unit: float = MOLARITY_PER_UNIT
    sample_times: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    sample_values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StimulusKind(self.kind))
        if self.kind is StimulusKind.SAMPLES:
            self._validate_samples()
            return
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            raise ConfigError(f"stimulus amplitude must be finite and >= 0, got {self.amplitude}")
        if not math.isfinite(self.t_start) or self.t_start < 0:
            raise ConfigError(f"stimulus t_start must be >= 0, got {self.t_start}")
        if self.kind is StimulusKind.SQUARE:
            self._validate_square()
        elif self.kind is StimulusKind.STEP:
            if not self.rise_time > 0:
                raise ConfigError(f"step rise_time must be > 0, got {self.rise_time}")

    def _validate_square(self) -> None:
        if not self.period > 0:
            raise ConfigError(f"square period must be > 0, got {self.period}")
        if not 0 < self.duty < 1:
            raise ConfigError(f"square duty must lie in (0, 1), got {self.duty}")
        if int(self.n_periods) != self.n_periods or self.n_periods < 1:
            raise ConfigError(f"n_periods must be a positive integer, got {self.n_periods}")
        high = self.duty * self.period
        low = (1.0 - self.duty) * self.period
        if not (0 < self.rise_time < high / 2 and self.rise_time < low / 2):
            raise ConfigError(
                f"rise_time {self.rise_time} must satisfy 0 < rise_time < min(duty*T, (1-duty)*T)/2 "
                f"= {min(high, low) / 2:.6g}"
            )

    def _validate_samples(self) -> None:
        if self.sample_times is None or self.sample_values is None:
            raise ConfigError("piecewise stimulus needs sample times and values")
        times = np.asarray(self.sample_times, dtype=float)
        values = np.asarray(self.sample_values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ConfigError("piecewise stimulus needs two or more (t, u) samples of equal length")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ConfigError("piecewise stimulus samples must be finite")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("piecewise stimulus sample times must be strictly increasing")
        object.__setattr__(self, "sample_times", times)
        object.__setattr__(self, "sample_values", values)

    @classmethod
    def square(cls, amplitude: float = 1.0, period: float = 2.0, **kwargs: Any) -> "Stimulus":
        return cls(kind=StimulusKind.SQUARE, amplitude=amplitude, period=period, **kwargs)

    @classmethod
    def from_samples(cls, times: Sequence[float], values: Sequence[float]) -> "Stimulus":
        return cls(
            kind=StimulusKind.SAMPLES,
            sample_times=np.asarray(times, dtype=float),
            sample_values=np.asarray(values, dtype=float),
        )

    @property
    def end_time(self) -> float:
        """End of the square-wave protocol window; inf for kinds that never switch off."""
        if self.kind is StimulusKind.SQUARE:
            return self.t_start + self.n_periods * self.period
        if self.kind is StimulusKind.SAMPLES:
            return float(self.sample_times[-1])
        return math.inf

    @property
    def molarity(self) -> float:
        return self.amplitude * self.molarity_per_unit

    def eval(self, t: float) -> float:
        if self.kind is StimulusKind.SQUARE:
            return self._square_value(t)
        if self.kind is StimulusKind.STEP:
            tau = t - self.t_start
            if tau <= 0:
                return 0.0
            if tau < self.rise_time:
                return self.amplitude * tau / self.rise_time
            return self.amplitude
        if self.kind is StimulusKind.CONSTANT:
            return self.amplitude
        return float(np.interp(t, self.sample_times, self.sample_values))

    def eval_derivative(self, t: float) -> float:
        if self.kind is StimulusKind.SQUARE:
            return self._square_slope(t)
        if self.kind is StimulusKind.STEP:
            slope = self.amplitude / self.rise_time
            tau = t - self.t_start
            if tau < 0 or tau > self.rise_time:
                return 0.0
            if tau == 0 or tau == self.rise_time:
                return 0.5 * slope
            return slope
        if self.kind is StimulusKind.CONSTANT:
            return 0.0
        return self._sample_slope(t)

    def _square_value(self, t: float) -> float:
        tau = t - self.t_start
        if tau < 0 or tau >= self.n_periods * self.period:
            return 0.0
        phase = tau % self.period
        high = self.duty * self.period
        if phase < self.rise_time:
            return self.amplitude * phase / self.rise_time
        if phase < high:
            return self.amplitude
        if phase < high + self.rise_time:
            return self.amplitude * (1.0 - (phase - high) / self.rise_time)
        return 0.0

    def _square_slope(self, t: float) -> float:
        tau = t - self.t_start
        if tau < 0 or tau >= self.n_periods * self.period:
            return 0.0
        phase = tau % self.period
        high = self.duty * self.period
        slope = self.amplitude / self.rise_time
        # breakpoints take the mean of the one-sided slopes
        if phase == 0 or phase == self.rise_time:
            return 0.5 * slope
        if phase < self.rise_time:
            return slope
        if phase < high:
            return 0.0
        if phase == high or phase == high + self.rise_time:
            return -0.5 * slope
        if phase < high + self.rise_time:
            return -slope
        return 0.0

    def _sample_slope(self, t: float) -> float:
        times = self.sample_times
        values = self.sample_values
        if t < times[0] or t > times[-1]:
            return 0.0
        last = times.size - 1

        def slope(i: int) -> float:
            if i < 0 or i >= last:
                return 0.0
            return float((values[i + 1] - values[i]) / (times[i + 1] - times[i]))

        idx = int(np.searchsorted(times, t, side="right")) - 1
        if times[idx] == t:
            return 0.5 * (slope(idx - 1) + slope(idx))
        return slope(idx)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind.value,
            "amplitude": self.amplitude,
            "molarity": self.molarity,
        }
        if self.kind is StimulusKind.SQUARE:
            data.update(
                period=self.period,
                duty=self.duty,
                rise_time=self.rise_time,
                n_periods=self.n_periods,
                t_start=self.t_start,
            )
        elif self.kind is StimulusKind.STEP:
            data.update(rise_time=self.rise_time, t_start=self.t_start)
        elif self.kind is StimulusKind.SAMPLES:
            data.update(n_samples=int(self.sample_times.size))
        return data


def sample(stimulus: Stimulus, times: Iterable[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate u and du/dt on a grid."""
    grid = np.asarray(list(times), dtype=float)
    values = np.fromiter((stimulus.eval(t) for t in grid), dtype=float, count=grid.size)
    slopes = np.fromiter((stimulus.eval_derivative(t) for t in grid), dtype=float, count=grid.size)
    return values, slopes

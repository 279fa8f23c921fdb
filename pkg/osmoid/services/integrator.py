from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Sequence, Tuple

import numpy as np

from osmoid.errors import ConfigError, IntegrationDivergedError

log = logging.getLogger(__name__)

Derivative = Callable[[float, np.ndarray], np.ndarray]

DEFAULT_DT = 0.001
_GRID_TOLERANCE = 1e-9


class Scheme(str, Enum):
    RK4 = "rk4"
    EULER = "euler"


@dataclass(slots=True, frozen=True)
class TimeGrid:
    t0: float
    t1: float
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and math.isfinite(self.t1) and math.isfinite(self.dt)):
            raise ConfigError("time grid values must be finite")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.t0 < self.t1:
            raise ConfigError(f"grid needs t0 < t1, got t0={self.t0} t1={self.t1}")
        ratio = (self.t1 - self.t0) / self.dt
        if abs(ratio - round(ratio)) > _GRID_TOLERANCE * max(1.0, ratio):
            raise ConfigError(f"(t1 - t0) / dt = {ratio!r} is not an integer step count")

    @property
    def n_steps(self) -> int:
        return int(round((self.t1 - self.t0) / self.dt))

    def __len__(self) -> int:
        return self.n_steps + 1

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1, dtype=float) * self.dt

    def time_at(self, step: int) -> float:
        return self.t0 + step * self.dt


@dataclass(slots=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self) -> Iterator[Tuple[float, np.ndarray]]:
        for t, state in zip(self.times, self.states):
            yield float(t), state

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def step_rk4(f: Derivative, t: float, state: np.ndarray, dt: float) -> np.ndarray:
    half = 0.5 * dt
    k1 = f(t, state)
    k2 = f(t + half, state + half * k1)
    k3 = f(t + half, state + half * k2)
    k4 = f(t + dt, state + dt * k3)
    result = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(result)):
        raise IntegrationDivergedError(t + dt)
    return result


def step_euler(f: Derivative, t: float, state: np.ndarray, dt: float) -> np.ndarray:
    result = state + dt * f(t, state)
    if not np.all(np.isfinite(result)):
        raise IntegrationDivergedError(t + dt)
    return result


_STEPPERS = {Scheme.RK4: step_rk4, Scheme.EULER: step_euler}


def simulate(
    f: Derivative,
    grid: TimeGrid,
    x0: Sequence[float],
    scheme: Scheme = Scheme.RK4,
) -> Trajectory:
    stepper = _STEPPERS[Scheme(scheme)]
    state = np.array(x0, dtype=float)
    if state.ndim != 1:
        raise ConfigError("initial state must be a flat vector")
    if not np.all(np.isfinite(state)):
        raise IntegrationDivergedError(grid.t0, 0, "non-finite initial state")

    times = grid.times()
    states = np.empty((times.size, state.size), dtype=float)
    states[0] = state
    for k in range(grid.n_steps):
        t = grid.time_at(k)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state = stepper(f, t, state, grid.dt)
        except IntegrationDivergedError as exc:
            raise IntegrationDivergedError(exc.t, k + 1) from exc
        states[k + 1] = state
    return Trajectory(times=times, states=states)


def check_resolution(grid: TimeGrid, rise_time: float) -> bool:
    """Warn when the step is too coarse to resolve stimulus edges (dt > rise_time / 5)."""
    if rise_time > 0 and grid.dt > rise_time / 5.0 * (1.0 + _GRID_TOLERANCE):
        log.warning(
            "dt=%.6g min exceeds rise_time/5=%.6g min; stimulus edges are under-resolved",
            grid.dt,
            rise_time / 5.0,
        )
        return False
    return True

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from osmoid.errors import ConfigError
from osmoid.services.integrator import Scheme, TimeGrid, check_resolution, simulate
from osmoid.services.signal_generator import Stimulus, sample
from store.models import RunTrace

log = logging.getLogger(__name__)

BASAL_LEVEL = 1.237


class StageMode(str, Enum):
    NONE = "none"
    ADDITIVE_OFFSET = "additive-offset"
    FLOOR = "floor"


@dataclass(slots=True, frozen=True)
class OutputStage:
    """Static map from the plant state x (or x1) to the measured output y."""

    mode: StageMode = StageMode.NONE
    r0: float = BASAL_LEVEL

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "mode", StageMode(self.mode))
        except ValueError as exc:
            raise ConfigError(f"unknown output stage mode {self.mode!r}") from exc
        if not math.isfinite(self.r0) or self.r0 < 0:
            raise ConfigError(f"output stage R0 must be finite and >= 0, got {self.r0}")

    def apply(self, x: Any) -> Any:
        if self.mode is StageMode.ADDITIVE_OFFSET:
            return x + self.r0
        if self.mode is StageMode.FLOOR:
            return np.maximum(x, self.r0)
        return x

    def invert(self, y: Any) -> Any:
        """Recover x from a measurement. The floor is not invertible below R0; y passes through."""
        if self.mode is StageMode.ADDITIVE_OFFSET:
            return y - self.r0
        return y

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode.value, "r0": self.r0}


def _require_finite(name: str, **values: float) -> None:
    for key, value in values.items():
        if not math.isfinite(value):
            raise ConfigError(f"{name}: coefficient {key} must be finite, got {value}")


def _check_order(state: np.ndarray, order: int, name: str) -> None:
    if len(state) != order:
        raise ValueError(f"{name} expects a state of length {order}, got {len(state)}")


@dataclass(slots=True, frozen=True)
class FirstOrderPlant:
    """x' + a x = b u"""

    a: float
    b: float
    allow_unstable: bool = False

    order = 1
    kind = "first-order"

    def __post_init__(self) -> None:
        _require_finite(self.kind, a=self.a, b=self.b)
        if self.a <= 0 and not self.allow_unstable:
            raise ConfigError(f"unstable first-order plant (a={self.a} <= 0); set allow_unstable to override")

    def dynamics(self, state: np.ndarray, u: float, u_dot: float) -> np.ndarray:
        _check_order(state, 1, self.kind)
        x = state[0]
        return np.array([-self.a * x + self.b * u])

    def linearized(self) -> Tuple[float, float, float]:
        return (self.a, self.b, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a, "b": self.b, "allow_unstable": self.allow_unstable}


@dataclass(slots=True, frozen=True)
class FirstOrderDerivPlant:
    """x' + a x = b u + c u'"""

    a: float
    b: float
    c: float
    allow_unstable: bool = False

    order = 1
    kind = "first-order-deriv"

    def __post_init__(self) -> None:
        _require_finite(self.kind, a=self.a, b=self.b, c=self.c)
        if self.a <= 0 and not self.allow_unstable:
            raise ConfigError(f"unstable first-order plant (a={self.a} <= 0); set allow_unstable to override")

    def dynamics(self, state: np.ndarray, u: float, u_dot: float) -> np.ndarray:
        _check_order(state, 1, self.kind)
        x = state[0]
        return np.array([-self.a * x + self.b * u + self.c * u_dot])

    def linearized(self) -> Tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c, "allow_unstable": self.allow_unstable}


@dataclass(slots=True, frozen=True)
class SecondOrderPlant:
    """x'' + a x' + b x = c u, in state form x1' = x2, x2' = -a x2 - b x1 + c u."""

    a: float
    b: float
    c: float
    allow_unstable: bool = False

    order = 2
    kind = "second-order"

    def __post_init__(self) -> None:
        _require_finite(self.kind, a=self.a, b=self.b, c=self.c)
        if (self.a <= 0 or self.b <= 0) and not self.allow_unstable:
            raise ConfigError(
                f"second-order plant is not Hurwitz (a={self.a}, b={self.b}); set allow_unstable to override"
            )

    def dynamics(self, state: np.ndarray, u: float, u_dot: float) -> np.ndarray:
        _check_order(state, 2, self.kind)
        x1 = state[0]
        x2 = state[1]
        return np.array([x2, -self.a * x2 - self.b * x1 + self.c * u])

    def linearized(self) -> Tuple[float, float, float]:
        return (self.a, self.b, self.c)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c, "allow_unstable": self.allow_unstable}


@dataclass(slots=True, frozen=True)
class PolyPlant:
    """x' = beta1 x + beta2 x^2 + beta3 x^3 + c1 u + c2 u^2 + c3 u^3"""

    beta1: float
    c1: float
    beta2: float = 0.0
    beta3: float = 0.0
    c2: float = 0.0
    c3: float = 0.0

    order = 1
    kind = "poly"

    def __post_init__(self) -> None:
        _require_finite(
            self.kind,
            beta1=self.beta1,
            beta2=self.beta2,
            beta3=self.beta3,
            c1=self.c1,
            c2=self.c2,
            c3=self.c3,
        )

    def dynamics(self, state: np.ndarray, u: float, u_dot: float) -> np.ndarray:
        _check_order(state, 1, self.kind)
        x = state[0]
        drift = self.beta1 * x + self.c1 * u
        return np.array([drift + (self.beta2 * x * x + self.beta3 * x * x * x) + (self.c2 * u * u + self.c3 * u * u * u)])

    def linearized(self) -> Tuple[float, float, float]:
        return (-self.beta1, self.c1, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind}
        data.update({f.name: getattr(self, f.name) for f in fields(self)})
        return data


Plant = Union[FirstOrderPlant, FirstOrderDerivPlant, SecondOrderPlant, PolyPlant]


def dynamics(plant: Plant, state: Sequence[float], u: float, u_dot: float) -> np.ndarray:
    return plant.dynamics(np.asarray(state, dtype=float), u, u_dot)


def observe(plant: Plant, output_stage: OutputStage, state: Sequence[float]) -> Union[float, np.ndarray]:
    """y = stage(x1); a (samples, order) array of states gives one output per sample."""
    states = np.asarray(state, dtype=float)
    _check_order(states.T if states.ndim == 2 else states, plant.order, plant.kind)
    if states.ndim == 2:
        return np.asarray(output_stage.apply(states[:, 0]), dtype=float)
    return float(output_stage.apply(states[0]))


def linearized(plant: Plant) -> Tuple[float, float, float]:
    return plant.linearized()


def true_parameters(plant: Plant) -> Optional[Tuple[float, float, float]]:
    """Parameters an estimator is compared against; polynomial plants have none."""
    if isinstance(plant, PolyPlant):
        return None
    return plant.linearized()


def plant_from_estimates(kind: str, params: Sequence[float]) -> Plant:
    """Build a simulable plant from identified (a, b, c) so it can predict a new stimulus."""
    a, b, c = (float(p) for p in params)
    if kind in {"first-order", "fo"}:
        return FirstOrderPlant(a=a, b=b, allow_unstable=True)
    if kind in {"first-order-deriv", "fo-deriv"}:
        return FirstOrderDerivPlant(a=a, b=b, c=c, allow_unstable=True)
    if kind in {"second-order", "so", "filtered-second-order", "so-filtered"}:
        return SecondOrderPlant(a=a, b=b, c=c, allow_unstable=True)
    raise ConfigError(f"no plant form for estimator kind {kind!r}")


@dataclass(slots=True, frozen=True)
class PlantPreset:
    factory: Callable[..., Plant]
    params: Dict[str, float]
    stage: OutputStage


PLANT_PRESETS: Dict[str, PlantPreset] = {
    "first-order": PlantPreset(
        FirstOrderPlant,
        {"a": 0.155, "b": 0.075},
        OutputStage(StageMode.ADDITIVE_OFFSET),
    ),
    "first-order-deriv": PlantPreset(
        FirstOrderDerivPlant,
        {"a": 0.155, "b": 0.075, "c": 0.00797},
        OutputStage(StageMode.ADDITIVE_OFFSET),
    ),
    "second-order": PlantPreset(
        SecondOrderPlant,
        {"a": 0.1995, "b": 0.0825, "c": 0.1025},
        OutputStage(StageMode.ADDITIVE_OFFSET),
    ),
    # weak cubic saturation around the first-order coefficients
    "poly": PlantPreset(
        PolyPlant,
        {"beta1": -0.155, "beta2": 0.0, "beta3": -0.05, "c1": 0.075, "c2": 0.0, "c3": 0.0},
        OutputStage(StageMode.ADDITIVE_OFFSET),
    ),
}


def build_plant(
    preset: str,
    params: Optional[Dict[str, float]] = None,
    stage: Optional[Dict[str, Any]] = None,
    allow_unstable: bool = False,
) -> Tuple[Plant, OutputStage]:
    entry = PLANT_PRESETS.get(preset)
    if entry is None:
        raise ConfigError(f"unknown plant preset {preset!r}; choose from {', '.join(sorted(PLANT_PRESETS))}")
    merged = dict(entry.params)
    for key, value in (params or {}).items():
        if key not in merged:
            raise ConfigError(f"plant preset {preset!r} has no parameter {key!r}")
        merged[key] = float(value)
    kwargs: Dict[str, Any] = dict(merged)
    if entry.factory is not PolyPlant:
        kwargs["allow_unstable"] = allow_unstable
    plant = entry.factory(**kwargs)
    output_stage = entry.stage
    if stage:
        output_stage = replace(entry.stage, **{k: v for k, v in stage.items() if k in {"mode", "r0"}})
    return plant, output_stage


def simulate_plant(
    plant: Plant,
    stimulus: Stimulus,
    grid: TimeGrid,
    stage: OutputStage = OutputStage(),
    x0: Optional[Sequence[float]] = None,
    scheme: Scheme = Scheme.RK4,
) -> RunTrace:
    """Plant-only run: the estimator columns mirror the plant (yhat = y, e = 0)."""
    if stimulus.rise_time and stimulus.kind.value in {"square", "step"}:
        check_resolution(grid, stimulus.rise_time)
    start = np.zeros(plant.order) if x0 is None else np.asarray(x0, dtype=float)
    _check_order(start, plant.order, plant.kind)

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        return plant.dynamics(state, stimulus.eval(t), stimulus.eval_derivative(t))

    trajectory = simulate(rhs, grid, start, scheme)
    log.info("simulated %s plant over %d steps", plant.kind, grid.n_steps)

    u, u_dot = sample(stimulus, trajectory.times)
    y = observe(plant, stage, trajectory.states)
    n = len(trajectory)
    a, b, c = plant.linearized()
    return RunTrace(
        t=trajectory.times,
        u=u,
        u_dot=u_dot,
        y=y,
        y_hat=y.copy(),
        e=np.zeros(n),
        a_hat=np.full(n, a),
        b_hat=np.full(n, b),
        c_hat=np.full(n, c),
        e1=np.zeros(n),
        true_params=true_parameters(plant),
        plant_states=trajectory.states,
    )

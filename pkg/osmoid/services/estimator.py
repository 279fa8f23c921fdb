from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from osmoid.errors import ConfigError, DatasetError, TraceError
from osmoid.services.integrator import Scheme, TimeGrid, check_resolution, simulate
from osmoid.services.plant_models import OutputStage, Plant, observe, true_parameters
from osmoid.services.signal_generator import Stimulus, StimulusKind, sample
from osmoid.utils.numerics import smoothed_derivative
from store.models import Dataset, RunTrace

log = logging.getLogger(__name__)


class EstimatorKind(str, Enum):
    FIRST_ORDER = "first-order"
    FIRST_ORDER_DERIV = "first-order-deriv"
    SECOND_ORDER = "second-order"
    FILTERED_SECOND_ORDER = "filtered-second-order"

    @classmethod
    def parse(cls, name: Union[str, "EstimatorKind"]) -> "EstimatorKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        key = _KIND_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError as exc:
            raise ConfigError(
                f"unknown estimator {name!r}; choose from {', '.join(sorted(_KIND_ALIASES))}"
            ) from exc

    @property
    def alias(self) -> str:
        return _ALIAS_BY_KIND[self]

    @property
    def n_states(self) -> int:
        return 1 if self in (EstimatorKind.FIRST_ORDER, EstimatorKind.FIRST_ORDER_DERIV) else 2

    @property
    def adapts_c(self) -> bool:
        return self is not EstimatorKind.FIRST_ORDER


_KIND_ALIASES: Dict[str, str] = {
    "fo": "first-order",
    "fo-deriv": "first-order-deriv",
    "so": "second-order",
    "so-filtered": "filtered-second-order",
}
_ALIAS_BY_KIND = {EstimatorKind(kind): alias for alias, kind in _KIND_ALIASES.items()}


class LawVariant(str, Enum):
    PAPER_LITERAL = "paper-literal"
    LYAPUNOV_CORRECTED = "lyapunov-corrected"

    @classmethod
    def parse(cls, name: Union[str, "LawVariant"]) -> "LawVariant":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        key = {"literal": "paper-literal", "corrected": "lyapunov-corrected"}.get(key, key)
        try:
            return cls(key)
        except ValueError as exc:
            raise ConfigError(f"unknown law variant {name!r}; use paper-literal or lyapunov-corrected") from exc

    @property
    def c_sign(self) -> float:
        """Sign of the second-order c-hat law; the corrected form cancels the c-tilde term in V'."""
        return -1.0 if self is LawVariant.LYAPUNOV_CORRECTED else 1.0


class ErrorSignal(str, Enum):
    STATE = "state"
    OUTPUT = "output"


@dataclass(slots=True, frozen=True)
class GainConfig:
    gamma_a: float = 1.0
    gamma_b: float = 1.0
    gamma_c: float = 1.0
    law_variant: LawVariant = LawVariant.PAPER_LITERAL
    projection: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "law_variant", LawVariant.parse(self.law_variant))
        for name in ("gamma_a", "gamma_b", "gamma_c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {value}")

    @classmethod
    def uniform(cls, gain: float, law_variant: Union[str, LawVariant] = LawVariant.PAPER_LITERAL) -> "GainConfig":
        return cls(gamma_a=gain, gamma_b=gain, gamma_c=gain, law_variant=law_variant)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.gamma_a, self.gamma_b, self.gamma_c)


@dataclass(slots=True, frozen=True)
class FilteredConfig:
    """Reference polynomial s^2 + lambda1 s + lambda2 and composite-error weights eps = w1 e1 + w2 e2."""

    lambda1: float = 0.2
    lambda2: float = 0.1
    w1: float = 0.5
    w2: float = 9.0

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "w1", "w2"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ConfigError(
                f"reference polynomial s^2 + {self.lambda1}s + {self.lambda2} is not Hurwitz"
            )

    @property
    def p11(self) -> float:
        return self.lambda1 * self.w1 + self.lambda2 * self.w2

    @property
    def error_weights(self) -> Tuple[float, float, float]:
        return (self.p11, self.w1, self.w2)

    def composite(self, e1: float, e2: float) -> float:
        return self.w1 * e1 + self.w2 * e2


@dataclass(slots=True, frozen=True)
class EstimatorState:
    x_hat: Tuple[float, ...] = ()
    a_hat: float = 0.0
    b_hat: float = 0.0
    c_hat: float = 0.0

    @classmethod
    def zeros(cls, n_states: int) -> "EstimatorState":
        return cls(x_hat=(0.0,) * n_states)

    def vector(self, n_states: int) -> np.ndarray:
        x_hat = tuple(self.x_hat) or (0.0,) * n_states
        if len(x_hat) != n_states:
            raise ConfigError(f"estimator needs {n_states} initial state(s), got {len(x_hat)}")
        return np.array([*x_hat, self.a_hat, self.b_hat, self.c_hat], dtype=float)


@dataclass(slots=True, frozen=True)
class ErrorState:
    e1: float
    e2: Optional[float] = None
    eps: Optional[float] = None
    a_tilde: Optional[float] = None
    b_tilde: Optional[float] = None
    c_tilde: Optional[float] = None

    @property
    def e(self) -> float:
        return self.e1


@dataclass(slots=True, frozen=True)
class FilteredStep:
    x_hat_rates: Tuple[float, float]
    a_rate: float
    b_rate: float
    c_rate: float
    eps: float


def first_order_laws(e: float, x_hat: float, u: float, gains: GainConfig) -> Tuple[float, float]:
    return gains.gamma_a * e * x_hat, -gains.gamma_b * e * u


def first_order_deriv_laws(
    e: float, x_hat: float, u: float, u_dot: float, gains: GainConfig
) -> Tuple[float, float, float]:
    a_rate, b_rate = first_order_laws(e, x_hat, u, gains)
    return a_rate, b_rate, -gains.gamma_c * e * u_dot


def second_order_laws(
    e2: float,
    x_hat1: float,
    x_hat2: float,
    u: float,
    gains: GainConfig,
    variant: Optional[LawVariant] = None,
) -> Tuple[float, float, float]:
    sign = LawVariant.parse(variant or gains.law_variant).c_sign
    return gains.gamma_a * e2 * x_hat2, gains.gamma_b * e2 * x_hat1, sign * gains.gamma_c * e2 * u


def filtered_second_order_step(
    x1: float,
    x2: float,
    estimates: EstimatorState,
    u: float,
    config: FilteredConfig,
    gains: GainConfig,
) -> FilteredStep:
    """Series-parallel estimator: true states x1, x2 enter as regressors."""
    x_hat1, x_hat2 = estimates.x_hat
    a_hat, b_hat, c_hat = estimates.a_hat, estimates.b_hat, estimates.c_hat
    lam1, lam2 = config.lambda1, config.lambda2
    eps = config.composite(x_hat1 - x1, x_hat2 - x2)
    x_hat2_rate = -lam1 * x_hat2 - (a_hat - lam1) * x2 - lam2 * x_hat1 - (b_hat - lam2) * x1 + c_hat * u
    sign = gains.law_variant.c_sign
    return FilteredStep(
        x_hat_rates=(x_hat2, x_hat2_rate),
        a_rate=gains.gamma_a * eps * x2,
        b_rate=gains.gamma_b * eps * x1,
        c_rate=sign * gains.gamma_c * eps * u,
        eps=eps,
    )


def _project(a_hat: float, b_hat: float, a_rate: float, b_rate: float) -> Tuple[float, float]:
    # hold a_hat, b_hat on the non-negative orthant
    if a_hat <= 0 and a_rate < 0:
        a_rate = 0.0
    if b_hat <= 0 and b_rate < 0:
        b_rate = 0.0
    return a_rate, b_rate


@dataclass(slots=True)
class PlantSource:
    plant: Plant
    stimulus: Stimulus
    stage: OutputStage = field(default_factory=OutputStage)
    x0: Optional[Sequence[float]] = None


@dataclass(slots=True)
class DatasetSource:
    dataset: Dataset
    smoothing_span: int = 5


Source = Union[PlantSource, DatasetSource]


class _Reference:
    """Measured side of the estimator: true plant states or a reconstruction from data."""

    def __init__(self, source: Source, estimator_stage: OutputStage, grid: TimeGrid):
        self.plant: Optional[Plant] = None
        if isinstance(source, PlantSource):
            self.plant = source.plant
            self.plant_stage = source.stage
            self.stimulus = source.stimulus
            start = np.zeros(self.plant.order) if source.x0 is None else np.asarray(source.x0, dtype=float)
            if start.size != self.plant.order:
                raise ConfigError(f"{self.plant.kind} plant needs {self.plant.order} initial state(s)")
            self.x0 = start
            if self.stimulus.kind in (StimulusKind.SQUARE, StimulusKind.STEP):
                check_resolution(grid, self.stimulus.rise_time)
            return

        dataset = source.dataset
        tolerance = 1e-9 * max(1.0, abs(grid.t1))
        if len(dataset) < 2 or dataset.t[0] > grid.t0 + tolerance or dataset.t[-1] < grid.t1 - tolerance:
            span = f"[{dataset.t[0]:.6g}, {dataset.t[-1]:.6g}]" if len(dataset) else "no samples"
            raise DatasetError(
                f"dataset {dataset.name!r} covers {span} min, grid needs [{grid.t0:.6g}, {grid.t1:.6g}]"
            )
        self.stimulus = Stimulus.from_samples(dataset.t, dataset.u)
        self.times = dataset.t
        self.y = dataset.y
        self.x1 = np.asarray(estimator_stage.invert(dataset.y), dtype=float)
        self.x2 = smoothed_derivative(dataset.t, self.x1, source.smoothing_span)
        self.x0 = np.empty(0)

    @property
    def order(self) -> int:
        return self.plant.order if self.plant is not None else 0

    def measure(self, t: float, state: np.ndarray, u: float, u_dot: float) -> Tuple[np.ndarray, float, float]:
        """(plant rates, x1, x2) at time t."""
        if self.plant is None:
            return self.x0, float(np.interp(t, self.times, self.x1)), float(np.interp(t, self.times, self.x2))
        rates = self.plant.dynamics(state, u, u_dot)
        if self.plant.order == 2:
            return rates, state[0], state[1]
        return rates, state[0], rates[0]

    def observed(self, times: np.ndarray, states: np.ndarray, u: np.ndarray, u_dot: np.ndarray):
        """(y, x1, x2) on the grid."""
        if self.plant is None:
            return (
                np.interp(times, self.times, self.y),
                np.interp(times, self.times, self.x1),
                np.interp(times, self.times, self.x2),
            )
        x1 = states[:, 0]
        if self.plant.order == 2:
            x2 = states[:, 1]
        else:
            x2 = self.plant.dynamics(states.T, u, u_dot)[0]
        return observe(self.plant, self.plant_stage, states), x1, x2


def identify(
    source: Source,
    estimator: Union[str, EstimatorKind],
    gains: GainConfig,
    grid: TimeGrid,
    initial: Optional[EstimatorState] = None,
    *,
    filtered: Optional[FilteredConfig] = None,
    scheme: Scheme = Scheme.RK4,
    estimator_stage: Optional[OutputStage] = None,
    error_signal: Union[str, ErrorSignal] = ErrorSignal.STATE,
) -> RunTrace:
    """
    Co-integrate the reference (plant or dataset), the estimator states and the
    parameter estimates as one augmented system on `grid`.

    Plant mode drives adaptation with the true state x (error_signal="state") or
    with the measured output mapped back through `estimator_stage` ("output",
    first-order estimators only). Dataset mode uses the de-biased measurement as x1
    and its smoothed derivative as x2.
    """
    kind = EstimatorKind.parse(estimator)
    signal = ErrorSignal(error_signal)
    if signal is ErrorSignal.OUTPUT and kind.n_states != 1:
        raise ConfigError("output-error adaptation is only defined for first-order estimators")
    filtered = filtered or FilteredConfig()
    estimator_stage = estimator_stage or OutputStage()
    reference = _Reference(source, estimator_stage, grid)
    p = reference.order
    n = kind.n_states
    start = np.concatenate((reference.x0, (initial or EstimatorState.zeros(n)).vector(n)))
    stimulus = reference.stimulus
    projection = gains.projection
    drive_output = signal is ErrorSignal.OUTPUT and reference.plant is not None

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        u = stimulus.eval(t)
        u_dot = stimulus.eval_derivative(t)
        plant_rates, x1, x2 = reference.measure(t, state[:p], u, u_dot)
        a_hat = state[p + n]
        b_hat = state[p + n + 1]
        c_hat = state[p + n + 2]

        if n == 1:
            x_hat = state[p]
            if drive_output:
                x1 = estimator_stage.invert(reference.plant_stage.apply(x1))
            e = x_hat - x1
            if kind is EstimatorKind.FIRST_ORDER:
                x_rates: List[float] = [-a_hat * x_hat + b_hat * u]
                a_rate, b_rate = first_order_laws(e, x_hat, u, gains)
                c_rate = 0.0
            else:
                x_rates = [-a_hat * x_hat + b_hat * u + c_hat * u_dot]
                a_rate, b_rate, c_rate = first_order_deriv_laws(e, x_hat, u, u_dot, gains)
        elif kind is EstimatorKind.SECOND_ORDER:
            x_hat1 = state[p]
            x_hat2 = state[p + 1]
            x_rates = [x_hat2, -a_hat * x_hat2 - b_hat * x_hat1 + c_hat * u]
            a_rate, b_rate, c_rate = second_order_laws(x_hat2 - x2, x_hat1, x_hat2, u, gains)
        else:
            step = filtered_second_order_step(
                x1, x2, EstimatorState((state[p], state[p + 1]), a_hat, b_hat, c_hat), u, filtered, gains
            )
            x_rates = list(step.x_hat_rates)
            a_rate, b_rate, c_rate = step.a_rate, step.b_rate, step.c_rate

        if projection:
            a_rate, b_rate = _project(a_hat, b_hat, a_rate, b_rate)
        return np.concatenate((plant_rates, x_rates, (a_rate, b_rate, c_rate)))

    log.info(
        "identify %s (%s, %s) over %d steps of %.6g min",
        kind.alias,
        gains.law_variant.value,
        "dataset" if reference.plant is None else reference.plant.kind,
        grid.n_steps,
        grid.dt,
    )
    trajectory = simulate(rhs, grid, start, scheme)

    times = trajectory.times
    states = trajectory.states
    u, u_dot = sample(stimulus, times)
    y, x1, x2 = reference.observed(times, states[:, :p], u, u_dot)
    x_hat = states[:, p:p + n]
    y_hat = np.asarray(estimator_stage.apply(x_hat[:, 0]), dtype=float)
    e1 = x_hat[:, 0] - x1
    e2 = eps = None
    if n == 2:
        e2 = x_hat[:, 1] - x2
        # the plain second-order laws are driven by e2 alone
        eps = filtered.w1 * e1 + filtered.w2 * e2 if kind is EstimatorKind.FILTERED_SECOND_ORDER else e2

    return RunTrace(
        t=times,
        u=u,
        u_dot=u_dot,
        y=y,
        y_hat=y_hat,
        e=y_hat - y,
        a_hat=states[:, p + n],
        b_hat=states[:, p + n + 1],
        c_hat=states[:, p + n + 2],
        e1=e1,
        e2=e2,
        eps=eps,
        estimator=kind.value,
        true_params=true_parameters(reference.plant) if reference.plant is not None else None,
        error_weights=filtered.error_weights if kind is EstimatorKind.FILTERED_SECOND_ORDER else None,
        plant_states=states[:, :p] if p else None,
        estimator_states=x_hat,
    )


def error_state(trace: RunTrace, k: int) -> ErrorState:
    if not len(trace):
        raise TraceError("empty trace")
    e1 = float(trace.e1[k]) if trace.e1 is not None else float(trace.e[k])
    tilde: Tuple[Optional[float], ...] = (None, None, None)
    if trace.true_params is not None:
        estimates = (trace.a_hat[k], trace.b_hat[k], trace.c_hat[k])
        tilde = tuple(float(est - true) for est, true in zip(estimates, trace.true_params))
    return ErrorState(
        e1=e1,
        e2=float(trace.e2[k]) if trace.e2 is not None else None,
        eps=float(trace.eps[k]) if trace.eps is not None else None,
        a_tilde=tilde[0],
        b_tilde=tilde[1],
        c_tilde=tilde[2],
    )

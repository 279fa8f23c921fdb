from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from osmoid.errors import ConfigError, TraceError
from osmoid.services.estimator import EstimatorKind, FilteredConfig, GainConfig
from osmoid.services.plant_models import Plant
from osmoid.utils.numerics import relative_spread, trailing_window, window_length
from store.models import PARAMETER_COLUMNS, RunTrace

DEFAULT_WINDOW_FRACTION = 0.25
DEFAULT_REL_TOL = 0.05
# keeps a flat zero trace convergent instead of dividing by a zero range
_RANGE_FLOOR = 1e-6


@dataclass(slots=True)
class Verdict:
    converged: bool
    steady_bias: float
    rms_error: float
    final_params: Tuple[float, float, float]
    window: int
    window_fraction: float
    rel_tol: float
    drift: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["final_params"] = dict(zip(PARAMETER_COLUMNS, self.final_params))
        return data


def _require_samples(trace: RunTrace) -> None:
    if not len(trace):
        raise TraceError("empty trace")


def steady_bias(trace: RunTrace, window_fraction: float = DEFAULT_WINDOW_FRACTION) -> float:
    _require_samples(trace)
    return float(np.mean(trailing_window(trace.e, window_fraction)))


def rms(trace: RunTrace, window_fraction: float = DEFAULT_WINDOW_FRACTION) -> float:
    _require_samples(trace)
    window = trailing_window(trace.e, window_fraction)
    return float(np.sqrt(np.mean(window * window)))


def parameter_drift(trace: RunTrace, window_fraction: float = DEFAULT_WINDOW_FRACTION) -> Dict[str, float]:
    _require_samples(trace)
    return {
        name: relative_spread(trailing_window(getattr(trace, name), window_fraction))
        for name in PARAMETER_COLUMNS
    }


def converged(
    trace: RunTrace,
    rel_tol: float = DEFAULT_REL_TOL,
    window_fraction: float = DEFAULT_WINDOW_FRACTION,
) -> bool:
    """
    Every parameter's relative spread over the trailing window is below rel_tol and the
    RMS of e about its steady bias is below rel_tol times the output range.
    """
    if not rel_tol > 0:
        raise ConfigError(f"rel_tol must be > 0, got {rel_tol}")
    _require_samples(trace)
    if any(spread >= rel_tol for spread in parameter_drift(trace, window_fraction).values()):
        return False
    window = trailing_window(trace.e, window_fraction)
    spread = window - float(np.mean(window))
    wobble = float(np.sqrt(np.mean(spread * spread)))
    output_range = max(float(np.max(trace.y) - np.min(trace.y)), _RANGE_FLOOR)
    return wobble < rel_tol * output_range


def evaluate(
    trace: RunTrace,
    rel_tol: float = DEFAULT_REL_TOL,
    window_fraction: float = DEFAULT_WINDOW_FRACTION,
) -> Verdict:
    return Verdict(
        converged=converged(trace, rel_tol, window_fraction),
        steady_bias=steady_bias(trace, window_fraction),
        rms_error=rms(trace, window_fraction),
        final_params=trace.final_params,
        window=window_length(len(trace), window_fraction),
        window_fraction=window_fraction,
        rel_tol=rel_tol,
        drift=parameter_drift(trace, window_fraction),
    )


def lyapunov_samples(trace: RunTrace, gains: GainConfig) -> np.ndarray:
    """
    V along the run: the estimator's quadratic error form plus 1/2 theta~^2 / gamma
    for every adapted parameter (a zero gain drops its term).
    """
    _require_samples(trace)
    if trace.true_params is None:
        raise TraceError("lyapunov samples need the true plant parameters (simulation mode only)")
    if trace.e1 is None:
        raise TraceError("trace carries no state error")
    kind = EstimatorKind.parse(trace.estimator or EstimatorKind.FIRST_ORDER)
    a, b, c = trace.true_params
    e1 = trace.e1

    if kind.n_states == 1:
        value = 0.5 * e1 * e1
    elif kind is EstimatorKind.SECOND_ORDER:
        value = 0.5 * b * e1 * e1 + 0.5 * trace.e2 * trace.e2
    else:
        p11, w1, w2 = trace.error_weights or FilteredConfig().error_weights
        e2 = trace.e2
        value = 0.5 * (p11 * e1 * e1 + 2.0 * w1 * e1 * e2 + w2 * e2 * e2)

    terms = [(trace.a_hat, a, gains.gamma_a), (trace.b_hat, b, gains.gamma_b)]
    if kind.adapts_c:
        terms.append((trace.c_hat, c, gains.gamma_c))
    for estimate, true, gamma in terms:
        if gamma > 0:
            tilde = estimate - true
            value = value + 0.5 * tilde * tilde / gamma
    return np.asarray(value, dtype=float)


def error_dynamics_residual(
    trace: RunTrace,
    plant: Plant,
    config: Optional[FilteredConfig] = None,
) -> np.ndarray:
    """
    e'' + lambda1 e' + lambda2 e + a~ x' + b~ x - c~ u at each sample of a filtered
    second-order run, with e'' taken from the exact estimator and plant rates.
    """
    _require_samples(trace)
    if trace.estimator != EstimatorKind.FILTERED_SECOND_ORDER.value:
        raise TraceError("error-dynamics residual is defined for filtered second-order runs")
    if plant.order != 2 or trace.plant_states is None or trace.estimator_states is None:
        raise TraceError("residual needs a second-order plant run with stored states")
    config = config or FilteredConfig()
    lam1, lam2 = config.lambda1, config.lambda2
    a, b, c = plant.linearized()

    x1 = trace.plant_states[:, 0]
    x2 = trace.plant_states[:, 1]
    x_hat1 = trace.estimator_states[:, 0]
    x_hat2 = trace.estimator_states[:, 1]
    u = trace.u
    u_dot = trace.u_dot if trace.u_dot is not None else np.zeros_like(u)

    x_hat2_rate = (
        -lam1 * x_hat2 - (trace.a_hat - lam1) * x2 - lam2 * x_hat1 - (trace.b_hat - lam2) * x1 + trace.c_hat * u
    )
    x2_rate = plant.dynamics(trace.plant_states.T, u, u_dot)[1]
    e1 = x_hat1 - x1
    e2 = x_hat2 - x2
    return (
        (x_hat2_rate - x2_rate)
        + lam1 * e2
        + lam2 * e1
        + (trace.a_hat - a) * x2
        + (trace.b_hat - b) * x1
        - (trace.c_hat - c) * u
    )


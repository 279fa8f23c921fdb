from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from osmoid.errors import IntegrationDivergedError, TraceError
from osmoid.services.estimator import EstimatorKind
from osmoid.services.integrator import Scheme, TimeGrid
from osmoid.services.plant_models import OutputStage, plant_from_estimates, simulate_plant
from osmoid.services.signal_generator import Stimulus
from store.models import PARAMETER_COLUMNS, RunTrace

log = logging.getLogger(__name__)


@dataclass(slots=True)
class Prediction:
    """How well the identified model reproduces a measured response it is replayed against."""

    estimator: str
    params: Tuple[float, float, float]
    source: str
    rms_error: Optional[float]
    max_error: Optional[float]
    diverged: bool = False

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["params"] = dict(zip(PARAMETER_COLUMNS, self.params))
        return data


def predict_response(
    estimator: Union[str, EstimatorKind],
    params: Sequence[float],
    stimulus: Stimulus,
    grid: TimeGrid,
    stage: OutputStage = OutputStage(),
    scheme: Scheme = Scheme.RK4,
) -> RunTrace:
    plant = plant_from_estimates(EstimatorKind.parse(estimator).value, params)
    return simulate_plant(plant, stimulus, grid, stage, scheme=scheme)


def prediction_error(predicted: RunTrace, measured: np.ndarray) -> Tuple[float, float]:
    """(rms, max abs) of predicted minus measured output over the whole run."""
    measured = np.asarray(measured, dtype=float)
    if predicted.y.shape != measured.shape:
        raise TraceError(f"prediction has {predicted.y.size} samples, measurement has {measured.size}")
    if not measured.size:
        raise TraceError("empty trace")
    residual = predicted.y - measured
    return float(np.sqrt(np.mean(residual * residual))), float(np.max(np.abs(residual)))


def validate_model(
    estimator: Union[str, EstimatorKind],
    params: Sequence[float],
    stimulus: Stimulus,
    grid: TimeGrid,
    measured: np.ndarray,
    *,
    stage: OutputStage = OutputStage(),
    scheme: Scheme = Scheme.RK4,
    source: str = "identification input",
) -> Prediction:
    kind = EstimatorKind.parse(estimator)
    params = tuple(float(p) for p in params)
    try:
        predicted = predict_response(kind, params, stimulus, grid, stage, scheme)
    except IntegrationDivergedError as exc:
        log.warning("identified %s model diverges on %s: %s", kind.alias, source, exc)
        return Prediction(kind.value, params, source, rms_error=None, max_error=None, diverged=True)
    rms_error, max_error = prediction_error(predicted, measured)
    log.info("identified %s model on %s: rms=%.4g max=%.4g", kind.alias, source, rms_error, max_error)
    return Prediction(kind.value, params, source, rms_error=rms_error, max_error=max_error)

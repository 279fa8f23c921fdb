from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from config import AppConfig
from osmoid.errors import ConfigError
from osmoid.services.estimator import (
    ErrorSignal,
    EstimatorKind,
    EstimatorState,
    FilteredConfig,
    GainConfig,
    LawVariant,
)
from osmoid.services.integrator import DEFAULT_DT, Scheme, TimeGrid
from osmoid.services.plant_models import OutputStage, Plant, build_plant
from osmoid.services.signal_generator import Stimulus, StimulusKind, protocol_entry, protocol_table

log = logging.getLogger(__name__)

SWEEP_AXES = ("period", "gain")


def _coerce(section: str, cls: type, data: Any) -> Any:
    if data is None:
        return cls()
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{section}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _number(section: str, name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{section}.{name} must be a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}.{name} must be a number, got {value!r}") from exc
    if not math.isfinite(number):
        raise ConfigError(f"{section}.{name} must be finite, got {value!r}")
    return number


def _integer(section: str, name: str, value: Any) -> int:
    number = _number(section, name, value)
    if number != int(number):
        raise ConfigError(f"{section}.{name} must be a whole number, got {value!r}")
    return int(number)


def _flag(section: str, name: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{section}.{name} must be true or false, got {value!r}")
    return value


def _mapping(section: str, value: Any) -> Dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{section}: expected a mapping, got {type(value).__name__}")
    return dict(value)


def _numbers(section: str, value: Any) -> Tuple[float, ...]:
    if value is None:
        return ()
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{section} must be a list of numbers, got {value!r}")
    return tuple(_number(section, str(index), item) for index, item in enumerate(value))


@dataclass(slots=True)
class StimulusSpec:
    kind: str = "square"
    amplitude: float = 1.0
    period: float = 2.0
    duty: float = 0.5
    rise_time: float = 0.05
    # None: taken from the protocol table for the period, or from the grid horizon
    n_periods: Optional[int] = None
    t_start: float = 0.0

    def resolved_periods(self, t1: Optional[float]) -> int:
        if self.n_periods is not None:
            return _integer("stimulus", "n_periods", self.n_periods)
        period = _number("stimulus", "period", self.period)
        if t1 is not None:
            t_start = _number("stimulus", "t_start", self.t_start)
            return max(1, math.ceil((t1 - t_start) / period - 1e-9))
        entry = protocol_entry(period)
        return entry.n_periods if entry is not None else 1

    def build(self, t1: Optional[float] = None) -> Stimulus:
        try:
            kind = StimulusKind(self.kind)
        except ValueError as exc:
            raise ConfigError(f"unknown stimulus kind {self.kind!r}") from exc
        if kind is StimulusKind.SAMPLES:
            raise ConfigError("piecewise stimuli come from a dataset, not from the stimulus section")
        return Stimulus(
            kind=kind,
            amplitude=_number("stimulus", "amplitude", self.amplitude),
            period=_number("stimulus", "period", self.period),
            duty=_number("stimulus", "duty", self.duty),
            rise_time=_number("stimulus", "rise_time", self.rise_time),
            n_periods=self.resolved_periods(t1) if kind is StimulusKind.SQUARE else 1,
            t_start=_number("stimulus", "t_start", self.t_start),
        )


@dataclass(slots=True)
class PlantSpec:
    preset: str = "first-order"
    params: Dict[str, float] = field(default_factory=dict)
    output_stage: Dict[str, Any] = field(default_factory=dict)
    allow_unstable: bool = False
    x0: Optional[List[float]] = None

    def build(self) -> Tuple[Plant, OutputStage]:
        params = _mapping("plant.params", self.params)
        params = {key: _number("plant.params", key, value) for key, value in params.items()}
        stage = _mapping("plant.output_stage", self.output_stage)
        if "r0" in stage:
            stage["r0"] = _number("plant.output_stage", "r0", stage["r0"])
        plant, output_stage = build_plant(
            str(self.preset), params, stage, allow_unstable=_flag("plant", "allow_unstable", self.allow_unstable)
        )
        if self.x0 is not None and len(_numbers("plant.x0", self.x0)) != plant.order:
            raise ConfigError(f"plant.x0 needs {plant.order} value(s) for a {plant.kind} plant, got {self.x0!r}")
        return plant, output_stage

    def build_x0(self) -> Optional[Tuple[float, ...]]:
        return None if self.x0 is None else _numbers("plant.x0", self.x0)


@dataclass(slots=True)
class EstimatorSpec:
    kind: str = "fo"
    error_signal: str = "state"
    projection: bool = False
    initial: Dict[str, Any] = field(default_factory=dict)
    output_stage: Dict[str, Any] = field(default_factory=dict)
    filtered: Dict[str, float] = field(default_factory=dict)

    def build_kind(self) -> EstimatorKind:
        return EstimatorKind.parse(self.kind)

    def build_error_signal(self) -> ErrorSignal:
        try:
            return ErrorSignal(self.error_signal)
        except ValueError as exc:
            raise ConfigError(f"estimator.error_signal must be state or output, got {self.error_signal!r}") from exc

    def build_initial(self) -> EstimatorState:
        data = _mapping("estimator.initial", self.initial)
        unknown = sorted(set(data) - {"x_hat", "a_hat", "b_hat", "c_hat"})
        if unknown:
            raise ConfigError(f"estimator.initial: unknown key(s) {', '.join(unknown)}")
        x_hat = _numbers("estimator.initial.x_hat", data.get("x_hat"))
        return EstimatorState(
            x_hat=x_hat,
            a_hat=_number("estimator.initial", "a_hat", data.get("a_hat", 0.0)),
            b_hat=_number("estimator.initial", "b_hat", data.get("b_hat", 0.0)),
            c_hat=_number("estimator.initial", "c_hat", data.get("c_hat", 0.0)),
        )

    def build_stage(self) -> OutputStage:
        stage = _mapping("estimator.output_stage", self.output_stage)
        if "r0" in stage:
            stage["r0"] = _number("estimator.output_stage", "r0", stage["r0"])
        return _coerce("estimator.output_stage", OutputStage, stage)

    def build_filtered(self) -> FilteredConfig:
        filtered = _mapping("estimator.filtered", self.filtered)
        values = {key: _number("estimator.filtered", key, value) for key, value in filtered.items()}
        return _coerce("estimator.filtered", FilteredConfig, values)


@dataclass(slots=True)
class GainSpec:
    gamma_a: float = 1.0
    gamma_b: float = 1.0
    gamma_c: float = 1.0


@dataclass(slots=True)
class GridSpec:
    t0: float = 0.0
    t1: Optional[float] = None
    dt: Optional[float] = None
    scheme: Optional[str] = None

    def build_scheme(self) -> Scheme:
        try:
            return Scheme(self.scheme or Scheme.RK4.value)
        except ValueError as exc:
            raise ConfigError(f"grid.scheme must be rk4 or euler, got {self.scheme!r}") from exc


@dataclass(slots=True)
class SweepSpec:
    axis: str = "period"
    values: Optional[List[float]] = None

    def build_values(self) -> Tuple[float, ...]:
        return _numbers("sweep.values", self.values)


@dataclass(slots=True)
class DiagnosticsSpec:
    rel_tol: float = 0.05
    window_fraction: float = 0.25

    def build(self) -> Tuple[float, float]:
        rel_tol = _number("diagnostics", "rel_tol", self.rel_tol)
        window_fraction = _number("diagnostics", "window_fraction", self.window_fraction)
        if rel_tol <= 0:
            raise ConfigError(f"diagnostics.rel_tol must be > 0, got {rel_tol}")
        if not 0 < window_fraction <= 1:
            raise ConfigError(f"diagnostics.window_fraction must lie in (0, 1], got {window_fraction}")
        return rel_tol, window_fraction


@dataclass(slots=True)
class ValidationSpec:
    """Replay the identified coefficients as a plant and score the predicted output."""

    enabled: bool = True
    # a stimulus section for a fresh input; None replays the identification input
    stimulus: Optional[Dict[str, Any]] = None

    def build_stimulus(self, t1: Optional[float]) -> Optional[Stimulus]:
        if self.stimulus is None:
            return None
        return _coerce("validation.stimulus", StimulusSpec, self.stimulus).build(t1)


@dataclass(slots=True)
class RunConfig:
    name: str = "run"
    preset: Optional[str] = None
    stimulus: StimulusSpec = field(default_factory=StimulusSpec)
    plant: Optional[PlantSpec] = None
    dataset: Optional[str] = None
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    gains: GainSpec = field(default_factory=GainSpec)
    law_variant: str = LawVariant.PAPER_LITERAL.value
    grid: GridSpec = field(default_factory=GridSpec)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    sweep: Optional[SweepSpec] = None
    validation: Optional[ValidationSpec] = None
    output_dir: str = "runs"
    plot: bool = True
    workers: int = 1
    # reserved; every run is deterministic
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunConfig":
        data = dict(data or {})
        if "toolkit" in data and isinstance(data.get("config"), dict):
            data = dict(data["config"])
        preset = data.get("preset")
        if preset:
            data = _merge(run_preset(preset), data)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"run config: unknown key(s) {', '.join(unknown)}")
        if data.get("plant") is None and data.get("dataset") is None:
            data["plant"] = {}
        return cls(
            name=str(data.get("name", "run")),
            preset=preset,
            stimulus=_coerce("stimulus", StimulusSpec, data.get("stimulus")),
            plant=_coerce("plant", PlantSpec, data["plant"]) if data.get("plant") is not None else None,
            dataset=str(data["dataset"]) if data.get("dataset") is not None else None,
            estimator=_coerce("estimator", EstimatorSpec, data.get("estimator")),
            gains=_coerce("gains", GainSpec, data.get("gains")),
            law_variant=str(data.get("law_variant", LawVariant.PAPER_LITERAL.value)),
            grid=_coerce("grid", GridSpec, data.get("grid")),
            diagnostics=_coerce("diagnostics", DiagnosticsSpec, data.get("diagnostics")),
            sweep=_coerce("sweep", SweepSpec, data["sweep"]) if data.get("sweep") is not None else None,
            validation=(
                _coerce("validation", ValidationSpec, data["validation"])
                if data.get("validation") is not None
                else None
            ),
            output_dir=str(data.get("output_dir", "runs")),
            plot=_flag("run config", "plot", data.get("plot", True)),
            workers=_integer("run config", "workers", data.get("workers", 1)),
            seed=_integer("run config", "seed", data["seed"]) if data.get("seed") is not None else None,
        )

    def to_dict(self) -> Dict[str, Any]:
        def section(value: Any) -> Any:
            if value is None:
                return None
            return {f.name: copy.deepcopy(getattr(value, f.name)) for f in fields(value)}

        return {
            "name": self.name,
            "preset": self.preset,
            "stimulus": section(self.stimulus),
            "plant": section(self.plant),
            "dataset": self.dataset,
            "estimator": section(self.estimator),
            "gains": section(self.gains),
            "law_variant": self.law_variant,
            "grid": section(self.grid),
            "diagnostics": section(self.diagnostics),
            "sweep": section(self.sweep),
            "validation": section(self.validation),
            "output_dir": self.output_dir,
            "plot": self.plot,
            "workers": self.workers,
            "seed": self.seed,
        }

    def validate(self, require_plant: bool = False) -> None:
        if (self.plant is None) == (self.dataset is None):
            raise ConfigError("run config needs exactly one of plant or dataset")
        if require_plant and self.plant is None:
            raise ConfigError("simulate needs a plant, not a dataset")
        self.build_gains()
        self.estimator.build_kind()
        self.estimator.build_error_signal()
        self.estimator.build_initial()
        self.estimator.build_stage()
        self.estimator.build_filtered()
        self.grid.build_scheme()
        self.diagnostics.build()
        if self.plant is not None:
            self.plant.build()
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.sweep is not None:
            if self.sweep.axis not in SWEEP_AXES:
                raise ConfigError(f"sweep axis must be one of {', '.join(SWEEP_AXES)}, got {self.sweep.axis!r}")
            self.sweep.build_values()
        if self.validation is not None:
            _flag("validation", "enabled", self.validation.enabled)
            if self.validation.stimulus is not None:
                if self.dataset is not None:
                    raise ConfigError("validation.stimulus needs a plant to measure the fresh response")
                _coerce("validation.stimulus", StimulusSpec, self.validation.stimulus)

    def build_gains(self) -> GainConfig:
        return GainConfig(
            gamma_a=_number("gains", "gamma_a", self.gains.gamma_a),
            gamma_b=_number("gains", "gamma_b", self.gains.gamma_b),
            gamma_c=_number("gains", "gamma_c", self.gains.gamma_c),
            law_variant=LawVariant.parse(self.law_variant),
            projection=_flag("estimator", "projection", self.estimator.projection),
        )

    def build_stimulus(self) -> Stimulus:
        t1 = None if self.grid.t1 is None else _number("grid", "t1", self.grid.t1)
        return self.stimulus.build(t1)

    def build_grid(self, end_time: float) -> TimeGrid:
        """Grid over [t0, t1]; without t1 the horizon ends with the stimulus (or dataset)."""
        dt = self.grid.dt if self.grid.dt is not None else DEFAULT_DT
        t1 = _number("grid", "t1", self.grid.t1) if self.grid.t1 is not None else end_time
        if t1 is None or not math.isfinite(t1):
            raise ConfigError("grid.t1 is required for stimuli without a protocol end")
        return TimeGrid(
            t0=_number("grid", "t0", self.grid.t0),
            t1=_number("grid", "t1", t1),
            dt=_number("grid", "dt", dt),
        )


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    # a dataset in the override replaces the preset's plant
    if override.get("dataset") is not None and "plant" not in override:
        merged.pop("plant", None)
    return merged


RUN_PRESETS: Dict[str, Dict[str, Any]] = {
    "fig3-like": {
        "name": "fig3-like",
        "stimulus": {"kind": "square", "period": 8.0, "n_periods": 8},
        "plant": {"preset": "first-order"},
        "estimator": {"kind": "fo"},
    },
    "paper-protocol": {
        "name": "paper-protocol",
        "stimulus": {"kind": "square"},
        "plant": {"preset": "first-order-deriv"},
        "estimator": {"kind": "fo-deriv"},
        "sweep": {"axis": "period", "values": [entry.period for entry in protocol_table()]},
    },
    "fo-recovery": {
        "name": "fo-recovery",
        "stimulus": {"kind": "square", "period": 16.0},
        "plant": {"preset": "first-order", "output_stage": {"mode": "none"}},
        "estimator": {"kind": "fo"},
        "grid": {"t1": 400.0, "dt": 0.01},
    },
    "offset-bias": {
        "name": "offset-bias",
        "stimulus": {"kind": "square", "period": 2.0},
        "plant": {"preset": "first-order-deriv"},
        "estimator": {"kind": "fo-deriv"},
        "grid": {"t1": 200.0, "dt": 0.01},
    },
    "model-rejection": {
        "name": "model-rejection",
        "stimulus": {"kind": "square", "period": 8.0},
        "plant": {"preset": "second-order", "output_stage": {"mode": "none"}},
        "estimator": {"kind": "fo"},
        "grid": {"t1": 200.0, "dt": 0.01},
    },
    "so-filtered-recovery": {
        "name": "so-filtered-recovery",
        "stimulus": {"kind": "square", "period": 2.0},
        "plant": {"preset": "second-order", "output_stage": {"mode": "none"}},
        "estimator": {"kind": "so-filtered"},
        "law_variant": "lyapunov-corrected",
        "grid": {"t1": 500.0, "dt": 0.01},
    },
}


def run_preset(name: str) -> Dict[str, Any]:
    preset = RUN_PRESETS.get(name)
    if preset is None:
        raise ConfigError(f"unknown run preset {name!r}; choose from {', '.join(sorted(RUN_PRESETS))}")
    data = copy.deepcopy(preset)
    data["preset"] = name
    return data


def load_run_config(path: Optional[Path] = None, preset: Optional[str] = None) -> RunConfig:
    """YAML (or JSON, including a written manifest) run description, optionally on top of a preset."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        data = loaded or {}
        if "toolkit" in data and isinstance(data.get("config"), dict):
            data = dict(data["config"])
    if preset:
        data = dict(data)
        data["preset"] = preset
    return RunConfig.from_dict(data)


def apply_defaults(config: RunConfig, app_config: AppConfig) -> RunConfig:
    grid = config.grid
    if grid.dt is None:
        grid = replace(grid, dt=app_config.integration.dt)
    if grid.scheme is None:
        grid = replace(grid, scheme=app_config.integration.scheme)
    return replace(config, grid=grid)


def apply_overrides(
    config: RunConfig,
    *,
    out_dir: Optional[str] = None,
    dt: Optional[float] = None,
    law_variant: Optional[str] = None,
    workers: Optional[int] = None,
    plot: Optional[bool] = None,
    validate: Optional[bool] = None,
) -> RunConfig:
    """Command-line flags win over file values."""
    changes: Dict[str, Any] = {}
    if out_dir is not None:
        changes["output_dir"] = str(out_dir)
    if dt is not None:
        changes["grid"] = replace(config.grid, dt=dt)
    if law_variant is not None:
        changes["law_variant"] = LawVariant.parse(law_variant).value
    if workers is not None:
        changes["workers"] = workers
    if plot is not None:
        changes["plot"] = plot
    if validate is not None:
        changes["validation"] = replace(config.validation or ValidationSpec(), enabled=validate)
    if changes:
        log.debug("flag overrides: %s", ", ".join(sorted(changes)))
    return replace(config, **changes)

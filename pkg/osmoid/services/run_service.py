from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from osmoid.errors import DatasetError, OsmoidError
from osmoid.services.config_service import GainSpec, RunConfig
from osmoid.services.diagnostics import Verdict, evaluate
from osmoid.services.estimator import DatasetSource, PlantSource, identify
from osmoid.services.integrator import TimeGrid
from osmoid.services.plant_models import OutputStage, Plant, simulate_plant
from osmoid.services.prediction import Prediction, validate_model
from osmoid.services.signal_generator import Stimulus, protocol_entry, protocol_table
from report.plots import PARAMETER_CHANNELS, Series, emit_plot, emit_series_plot, error_channels
from store.csv_io import read_timeseries_csv, read_trace_csv, write_summary_csv, write_trace_csv
from store.manifest import MANIFEST_NAME, read_manifest, write_manifest
from store.models import RunTrace

log = logging.getLogger(__name__)

TRACE_NAME = "trace.csv"
SUMMARY_NAME = "summary.csv"
SUMMARY_PLOT = "summary.svg"


@dataclass(slots=True)
class RunResult:
    run_dir: Path
    trace: RunTrace
    verdict: Optional[Verdict]
    manifest: Dict[str, Any]
    prediction: Optional[Prediction] = None


@dataclass(slots=True)
class SweepResult:
    sweep_dir: Path
    rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def failures(self) -> List[Dict[str, Any]]:
        return [row for row in self.rows if row["status"] != "ok"]


def run_directory(config: RunConfig) -> Path:
    return Path(config.output_dir) / config.name


def _write_run(
    config: RunConfig,
    run_dir: Path,
    trace: RunTrace,
    verdict: Optional[Verdict],
    mode: str,
    resolved: Optional[Dict[str, Any]] = None,
    prediction: Optional[Prediction] = None,
) -> RunResult:
    trace_path = run_dir / TRACE_NAME
    write_trace_csv(trace, trace_path)
    artifacts = {"trace": TRACE_NAME}
    if config.plot:
        artifacts.update(plot_run(run_dir, trace))
    manifest = write_manifest(
        config.to_dict(),
        verdict.to_dict() if verdict is not None else None,
        run_dir / MANIFEST_NAME,
        final_params=dict(zip(PARAMETER_CHANNELS, trace.final_params)) if len(trace) else None,
        artifacts=artifacts,
        mode=mode,
        resolved=resolved,
        prediction=prediction.to_dict() if prediction is not None else None,
    )
    log.info("run %s written to %s", config.name, run_dir)
    return RunResult(run_dir=run_dir, trace=trace, verdict=verdict, manifest=manifest, prediction=prediction)


def _plant_record(plant: Plant, stage: OutputStage) -> Dict[str, Any]:
    record = plant.to_dict()
    record["output_stage"] = stage.to_dict()
    return record


def plot_run(run_dir: Path, trace: RunTrace) -> Dict[str, str]:
    emit_plot(trace, error_channels(trace), run_dir / "errors.svg", title="estimation errors")
    emit_plot(trace, PARAMETER_CHANNELS, run_dir / "parameters.svg", title="parameter estimates")
    return {"errors_plot": "errors.svg", "parameters_plot": "parameters.svg"}


def execute_simulate(config: RunConfig, run_dir: Optional[Path] = None) -> RunResult:
    config.validate(require_plant=True)
    plant, stage = config.plant.build()
    stimulus = config.build_stimulus()
    grid = config.build_grid(stimulus.end_time)
    trace = simulate_plant(plant, stimulus, grid, stage, x0=config.plant.build_x0(), scheme=config.grid.build_scheme())
    resolved = {"stimulus": stimulus.to_dict(), "plant": _plant_record(plant, stage)}
    return _write_run(config, run_dir or run_directory(config), trace, None, "simulate", resolved)


def execute_identify(config: RunConfig, run_dir: Optional[Path] = None) -> RunResult:
    config.validate()
    estimator = config.estimator
    resolved: Dict[str, Any] = {}
    plant: Optional[Plant] = None
    stage = OutputStage()
    if config.dataset is not None:
        dataset = read_timeseries_csv(config.dataset)
        source: Any = DatasetSource(dataset)
        stimulus = Stimulus.from_samples(dataset.t, dataset.u) if len(dataset) >= 2 else None
        end_time = float(dataset.t[-1]) if len(dataset) else None
    else:
        plant, stage = config.plant.build()
        stimulus = config.build_stimulus()
        source = PlantSource(plant, stimulus, stage, x0=config.plant.build_x0())
        end_time = stimulus.end_time
        resolved = {"stimulus": stimulus.to_dict(), "plant": _plant_record(plant, stage)}
    grid = config.build_grid(end_time)
    trace = identify(
        source,
        estimator.build_kind(),
        config.build_gains(),
        grid,
        estimator.build_initial(),
        filtered=estimator.build_filtered(),
        scheme=config.grid.build_scheme(),
        estimator_stage=estimator.build_stage(),
        error_signal=estimator.build_error_signal(),
    )
    rel_tol, window_fraction = config.diagnostics.build()
    verdict = evaluate(trace, rel_tol, window_fraction)
    log.info(
        "%s: converged=%s bias=%.4g rms=%.4g params=(%.5g, %.5g, %.5g)",
        config.name,
        verdict.converged,
        verdict.steady_bias,
        verdict.rms_error,
        *verdict.final_params,
    )
    prediction = None
    if stimulus is not None and config.validation is not None and config.validation.enabled:
        prediction = _predict(config, trace, stimulus, grid, plant, stage)
    return _write_run(
        config, run_dir or run_directory(config), trace, verdict, "identify", resolved, prediction=prediction
    )


def _predict(
    config: RunConfig,
    trace: RunTrace,
    stimulus: Stimulus,
    grid: TimeGrid,
    plant: Optional[Plant],
    stage: OutputStage,
) -> Prediction:
    """Replay the final estimates open loop, on the identification input or on a fresh stimulus."""
    kind = config.estimator.build_kind()
    scheme = config.grid.build_scheme()
    model_stage = config.estimator.build_stage()
    t1 = None if config.grid.t1 is None else grid.t1
    fresh = config.validation.build_stimulus(t1)
    if fresh is None:
        return validate_model(kind, trace.final_params, stimulus, grid, trace.y, stage=model_stage, scheme=scheme)
    fresh_grid = config.build_grid(fresh.end_time)
    measured = simulate_plant(plant, fresh, fresh_grid, stage, x0=config.plant.build_x0(), scheme=scheme)
    return validate_model(
        kind,
        trace.final_params,
        fresh,
        fresh_grid,
        measured.y,
        stage=model_stage,
        scheme=scheme,
        source="validation stimulus",
    )



def expand_sweep(config: RunConfig) -> List[Tuple[str, float, RunConfig]]:
    """(child directory name, sweep value, child config), in sweep-value order."""
    sweep = config.sweep
    axis = sweep.axis if sweep is not None else "period"
    if sweep is not None and sweep.values:
        values = list(sweep.build_values())
    elif axis == "period":
        values = [entry.period for entry in protocol_table()]
    else:
        values = [0.5, 1.0, 2.0]

    children = []
    for index, value in enumerate(sorted(values)):
        label = f"{index:02d}-{axis}-{value:g}"
        if axis == "period":
            entry = protocol_entry(value)
            stimulus = replace(
                config.stimulus,
                period=value,
                n_periods=entry.n_periods if entry is not None else config.stimulus.n_periods,
            )
            child = replace(config, stimulus=stimulus, grid=replace(config.grid, t1=None))
        else:
            child = replace(config, gains=GainSpec(gamma_a=value, gamma_b=value, gamma_c=value))
        children.append((label, value, replace(child, name=label, sweep=None, workers=1)))
    return children


def _run_child(payload: Tuple[int, str, float, Dict[str, Any], str]) -> Dict[str, Any]:
    index, axis, value, config_data, run_dir = payload
    row: Dict[str, Any] = {"index": index, "axis": axis, "value": value, "run_dir": Path(run_dir).name}
    try:
        result = execute_identify(RunConfig.from_dict(config_data), Path(run_dir))
    except OsmoidError as exc:
        log.error("sweep child %s failed: %s", row["run_dir"], exc)
        row.update(status="failed", exit_code=exc.exit_code, error=str(exc))
        return row
    except Exception as exc:
        log.exception("sweep child %s crashed", row["run_dir"])
        row.update(status="failed", exit_code=1, error=f"{type(exc).__name__}: {exc}")
        return row
    verdict = result.verdict
    a_hat, b_hat, c_hat = verdict.final_params
    row.update(
        status="ok",
        exit_code=0,
        error="",
        a_hat=a_hat,
        b_hat=b_hat,
        c_hat=c_hat,
        converged=verdict.converged,
        steady_bias=verdict.steady_bias,
        rms_error=verdict.rms_error,
    )
    if result.prediction is not None:
        row["prediction_rms"] = result.prediction.rms_error
    return row


async def _run_children(payloads: List[Tuple[Any, ...]], workers: int) -> List[Any]:
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, _run_child, payload) for payload in payloads]
        return await asyncio.gather(*futures, return_exceptions=True)


def execute_sweep(config: RunConfig, sweep_dir: Optional[Path] = None) -> SweepResult:
    config.validate()
    sweep_dir = sweep_dir or run_directory(config)
    children = expand_sweep(config)
    axis = config.sweep.axis if config.sweep is not None else "period"
    payloads = [
        (index, axis, value, child.to_dict(), str(sweep_dir / label))
        for index, (label, value, child) in enumerate(children)
    ]
    log.info("sweep %s: %d runs over %s with %d worker(s)", config.name, len(payloads), axis, config.workers)

    if config.workers > 1 and len(payloads) > 1:
        outcomes = asyncio.run(_run_children(payloads, min(config.workers, len(payloads))))
    else:
        outcomes = [_run_child(payload) for payload in payloads]

    rows = []
    for payload, outcome in zip(payloads, outcomes):
        if isinstance(outcome, BaseException):
            log.error("sweep child %s crashed: %s", Path(payload[4]).name, outcome)
            outcome = {
                "index": payload[0],
                "axis": axis,
                "value": payload[2],
                "run_dir": Path(payload[4]).name,
                "status": "failed",
                "exit_code": 1,
                "error": str(outcome),
            }
        log.debug("sweep child %s: %s", outcome["run_dir"], outcome["status"])
        rows.append(outcome)
    rows.sort(key=lambda row: (row["value"], row["index"]))

    write_summary_csv(rows, sweep_dir / SUMMARY_NAME)
    if config.plot:
        plot_sweep(sweep_dir, rows)
    return SweepResult(sweep_dir=sweep_dir, rows=rows)


def plot_sweep(sweep_dir: Path, rows: List[Dict[str, Any]]) -> Optional[Path]:
    series = []
    for row in rows:
        if row.get("status") != "ok":
            continue
        trace = read_trace_csv(sweep_dir / row["run_dir"] / TRACE_NAME)
        series.append(Series(label=f"{row['axis']}={row['value']:g}", x=trace.t, y=trace.e))
    if not series:
        return None
    path = sweep_dir / SUMMARY_PLOT
    emit_series_plot(series, path, title="estimation error per run", y_label="e")
    return path


def report(path: Path) -> List[Path]:
    """Regenerate plots for a run directory or every run below a sweep directory."""
    path = Path(path)
    if not path.is_dir():
        raise DatasetError(f"not a directory: {path}")
    if (path / MANIFEST_NAME).is_file():
        read_manifest(path)
        plot_run(path, read_trace_csv(path / TRACE_NAME))
        return [path / "errors.svg", path / "parameters.svg"]

    run_dirs = sorted(child for child in path.iterdir() if (child / MANIFEST_NAME).is_file())
    if not run_dirs:
        raise DatasetError(f"no run manifests found under {path}")
    written: List[Path] = []
    series = []
    for run_dir in run_dirs:
        read_manifest(run_dir)
        trace = read_trace_csv(run_dir / TRACE_NAME)
        plot_run(run_dir, trace)
        written.extend([run_dir / "errors.svg", run_dir / "parameters.svg"])
        series.append(Series(label=run_dir.name, x=np.asarray(trace.t), y=np.asarray(trace.e)))
    emit_series_plot(series, path / SUMMARY_PLOT, title="estimation error per run", y_label="e")
    written.append(path / SUMMARY_PLOT)
    return written

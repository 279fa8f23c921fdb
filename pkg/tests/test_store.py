from __future__ import annotations

import json

import numpy as np
import pytest

from osmoid.errors import DatasetError, TraceError
from store import (
    Dataset,
    RunTrace,
    read_manifest,
    read_timeseries_csv,
    read_trace_csv,
    write_manifest,
    write_summary_csv,
    write_trace_csv,
)
from store.models import PARAMETER_COLUMNS, TRACE_COLUMNS


def write_text(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


def simple_trace(second_order: bool = False) -> RunTrace:
    t = np.arange(5) * 0.25
    extra = {}
    if second_order:
        extra = {"e1": t * 0.5, "e2": -t, "eps": t * 2.0}
    return RunTrace(
        t=t,
        u=np.array([0.0, 1.0, 1.0, 0.0, 0.0]),
        y=t + 1.25,
        y_hat=t + 1.5,
        e=np.full(5, 0.25),
        a_hat=np.array([0.0, 0.125, 0.15625, 0.15234375, 0.155]),
        b_hat=np.full(5, 0.075),
        c_hat=np.zeros(5),
        **extra,
    )


def test_reads_dataset_with_metadata(tmp_path) -> None:
    path = write_text(
        tmp_path / "hog1.csv",
        "# strain: wild type\n# units: a.u.\nt,u,y\n0,0,1.237\n1, 1 ,1.5\n2,0,1.4\n",
    )
    dataset = read_timeseries_csv(path)
    assert dataset.name == "hog1"
    assert dataset.metadata == {"strain": "wild type", "units": "a.u."}
    assert dataset.u.tolist() == [0.0, 1.0, 0.0]
    assert dataset.samples[1] == (1.0, 1.0, 1.5)
    assert len(dataset) == 3


def test_extra_columns_are_ignored(tmp_path) -> None:
    path = write_text(tmp_path / "extra.csv", "t,y,u,cell\n0,1,0,a\n1,2,1,b\n")
    dataset = read_timeseries_csv(path)
    assert dataset.y.tolist() == [1.0, 2.0]


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("t,u\n0,1\n", "missing column(s) y"),
        ("t,u,y\n0,0,1\n1,abc,1\n", "'abc' at row 2, column u"),
        ("t,u,y\n0,0,1\n1,0,\n", "at row 2, column y"),
        ("t,u,y\n0,0,1\n1,0,1\n1,0,1\n", "not strictly increasing at row 3"),
        ("t,u,y\n0,0,1\n1,0,nan\n", "at row 2, column y"),
    ],
)
def test_malformed_dataset_names_the_offending_cell(tmp_path, body: str, fragment: str) -> None:
    path = write_text(tmp_path / "bad.csv", body)
    with pytest.raises(DatasetError) as excinfo:
        read_timeseries_csv(path)
    assert fragment in str(excinfo.value)


def test_missing_dataset_file(tmp_path) -> None:
    with pytest.raises(DatasetError):
        read_timeseries_csv(tmp_path / "absent.csv")


def test_dataset_model_validates_rows() -> None:
    with pytest.raises(DatasetError, match="row 2"):
        Dataset("bad", t=[0.0, np.inf], u=[0.0, 0.0], y=[1.0, 1.0])
    with pytest.raises(DatasetError, match="row 3"):
        Dataset("bad", t=[0.0, 2.0, 1.0], u=[0.0, 0.0, 0.0], y=[1.0, 1.0, 1.0])
    with pytest.raises(DatasetError):
        Dataset("bad", t=[0.0, 1.0], u=[0.0], y=[1.0, 1.0])


def test_trace_length_mismatch_is_rejected() -> None:
    with pytest.raises(TraceError):
        RunTrace(
            t=np.zeros(3),
            u=np.zeros(3),
            y=np.zeros(2),
            y_hat=np.zeros(3),
            e=np.zeros(3),
            a_hat=np.zeros(3),
            b_hat=np.zeros(3),
            c_hat=np.zeros(3),
        )


def test_trace_csv_has_fixed_header(tmp_path) -> None:
    path = tmp_path / "run" / "trace.csv"
    write_trace_csv(simple_trace(), path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",") == list(TRACE_COLUMNS)


def test_trace_csv_reads_back(tmp_path) -> None:
    original = simple_trace(second_order=True)
    path = tmp_path / "trace.csv"
    write_trace_csv(original, path)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header.endswith("e1,e2,eps")

    restored = read_trace_csv(path)
    assert restored.is_second_order
    for name, values in original.columns().items():
        assert np.array_equal(restored.columns()[name], values), name
    assert restored.final_params == original.final_params


def test_rewriting_a_read_trace_is_byte_identical(tmp_path) -> None:
    t = np.linspace(0.0, 1.0, 7)
    trace = RunTrace(
        t=t,
        u=np.sin(t),
        y=np.exp(-t) / 3.0,
        y_hat=np.exp(-t) / 7.0,
        e=np.exp(-t) * (1 / 7.0 - 1 / 3.0),
        a_hat=np.sqrt(t),
        b_hat=t / 11.0,
        c_hat=np.zeros(7),
    )
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    write_trace_csv(trace, first)
    restored = read_trace_csv(first)
    write_trace_csv(restored, second)
    assert first.read_bytes() == second.read_bytes()
    assert np.allclose(restored.y, trace.y, rtol=1e-8, atol=0.0)


def test_empty_trace_writes_header_only(tmp_path) -> None:
    path = tmp_path / "empty.csv"
    write_trace_csv(RunTrace.empty(), path)
    assert path.read_text(encoding="utf-8") == ",".join(TRACE_COLUMNS) + "\n"
    write_trace_csv(RunTrace.empty(second_order=True), path)
    assert len(path.read_text(encoding="utf-8").strip().split(",")) == 11


def test_trace_csv_rejects_other_files(tmp_path) -> None:
    path = write_text(tmp_path / "data.csv", "t,u,y\n0,0,1\n")
    with pytest.raises(DatasetError):
        read_trace_csv(path)


def test_channels_and_final_params() -> None:
    trace = simple_trace()
    assert trace.channel("yhat")[0] == 1.5
    assert trace.final_params == (0.155, 0.075, 0.0)
    with pytest.raises(KeyError):
        trace.channel("e2")
    with pytest.raises(TraceError):
        RunTrace.empty().final_params


def test_summary_collects_every_key(tmp_path) -> None:
    rows = [
        {"index": 0, "value": 2.0, "status": "ok", "a_hat": 0.155},
        {"index": 1, "value": 4.0, "status": "failed", "error": "diverged"},
    ]
    path = tmp_path / "summary.csv"
    write_summary_csv(rows, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "index,value,status,a_hat,error"
    assert len(lines) == 3


def test_manifest_round_trip(tmp_path) -> None:
    config = {
        "name": "demo",
        "estimator": {"kind": "fo"},
        "gains": {"gamma_a": 1.0},
        "law_variant": "paper-literal",
        "grid": {"t0": 0.0, "t1": 10.0, "dt": 0.01},
    }
    verdict = {"converged": True, "steady_bias": -1.2}
    final = dict(zip(PARAMETER_COLUMNS, (0.15, 0.07, 0.0)))
    written = write_manifest(config, verdict, tmp_path / "manifest.json", final_params=final, artifacts={"trace": "trace.csv"})
    loaded = read_manifest(tmp_path)
    assert loaded == json.loads(json.dumps(written))
    assert loaded["estimator"] == "fo"
    assert loaded["final_params"]["a_hat"] == 0.15
    assert loaded["config"]["grid"]["dt"] == 0.01
    assert loaded["toolkit"]["name"] == "osmoid"


def test_missing_or_broken_manifest(tmp_path) -> None:
    with pytest.raises(DatasetError):
        read_manifest(tmp_path)
    write_text(tmp_path / "manifest.json", "{not json")
    with pytest.raises(DatasetError):
        read_manifest(tmp_path / "manifest.json")

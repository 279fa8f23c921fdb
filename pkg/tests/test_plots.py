from __future__ import annotations

import xml.etree.ElementTree as ET

import matplotlib.pyplot as plt
import numpy as np
import pytest

from osmoid.errors import ConfigError
from report import emit_plot, emit_series_plot
from report.plots import MAX_POINTS, Series, build_figure, error_channels
from store.models import RunTrace

SVG = "{http://www.w3.org/2000/svg}"


def ramp_trace(n: int = 201, second_order: bool = False) -> RunTrace:
    t = np.linspace(0.0, 20.0, n)
    e = np.linspace(-1.0, 1.0, n)
    extra = {"e1": e * 0.5, "e2": e * 0.25, "eps": e} if second_order else {}
    return RunTrace(
        t=t,
        u=np.zeros(n),
        y=np.ones(n),
        y_hat=np.ones(n) + e,
        e=e,
        a_hat=np.full(n, 0.155),
        b_hat=np.full(n, 0.075),
        c_hat=np.zeros(n),
        **extra,
    )


def group_ids(path) -> list:
    root = ET.parse(path).getroot()
    return [g.get("id") for g in root.iter(f"{SVG}g") if g.get("id")]


def test_error_plot_has_one_line_per_channel(tmp_path) -> None:
    path = tmp_path / "errors.svg"
    emit_plot(ramp_trace(), ["e"], path, title="errors")
    assert group_ids(path).count("e") == 1
    assert not any(name in group_ids(path) for name in ("a_hat", "b_hat", "e1"))


def test_axes_are_widened_by_five_percent() -> None:
    trace = ramp_trace()
    fig = build_figure([Series("e", trace.t, trace.e)], "errors", "t [min]", "e")
    try:
        ax = fig.axes[0]
        assert ax.get_ylim() == pytest.approx((-1.1, 1.1))
        assert ax.get_xlim() == pytest.approx((-1.0, 21.0))
        assert [text.get_text() for text in ax.get_legend().get_texts()] == ["e"]
    finally:
        plt.close(fig)


def test_parameter_plot(tmp_path) -> None:
    path = tmp_path / "parameters.svg"
    emit_plot(ramp_trace(), ["a_hat", "b_hat", "c_hat"], path)
    ids = group_ids(path)
    assert [name for name in ids if name in {"a_hat", "b_hat", "c_hat"}] == ["a_hat", "b_hat", "c_hat"]


def test_long_traces_are_decimated() -> None:
    trace = ramp_trace(n=20001)
    fig = build_figure([Series("e", trace.t, trace.e)], "long", "t [min]", "e")
    try:
        x = fig.axes[0].lines[0].get_xdata()
        assert x.size <= MAX_POINTS + 1
        assert x[0] == 0.0
        assert x[-1] == 20.0
    finally:
        plt.close(fig)


@pytest.mark.parametrize("channels", [[], ["t"], ["pressure"], ["e2"]])
def test_bad_channel_lists(tmp_path, channels) -> None:
    with pytest.raises(ConfigError):
        emit_plot(ramp_trace(), channels, tmp_path / "bad.svg")
    assert not (tmp_path / "bad.svg").exists()


def test_error_channels_follow_estimator_order() -> None:
    assert error_channels(ramp_trace()) == ["e"]
    assert error_channels(ramp_trace(second_order=True)) == ["e", "e1", "e2", "eps"]


def test_series_plot_overlays_runs(tmp_path) -> None:
    t = np.linspace(0.0, 1.0, 11)
    labels = [f"period={p:g}" for p in (2.0, 4.0, 8.0)]
    series = [Series(label=label, x=t, y=t * (i + 1)) for i, label in enumerate(labels)]
    path = tmp_path / "summary.svg"
    emit_series_plot(series, path, title="sweep", y_label="e")
    assert [name for name in group_ids(path) if name in labels] == labels


def test_rewriting_a_plot_is_byte_identical(tmp_path) -> None:
    first, second = tmp_path / "first.svg", tmp_path / "second.svg"
    emit_plot(ramp_trace(), ["e"], first, title="errors")
    emit_plot(ramp_trace(), ["e"], second, title="errors")
    assert first.read_bytes() == second.read_bytes()


def test_series_plot_needs_data(tmp_path) -> None:
    with pytest.raises(ConfigError):
        emit_series_plot([], tmp_path / "empty.svg", title="sweep", y_label="e")

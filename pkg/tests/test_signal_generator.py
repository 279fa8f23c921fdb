from __future__ import annotations

import numpy as np
import pytest

from osmoid.errors import ConfigError
from osmoid.services.signal_generator import (
    ProtocolEntry,
    Stimulus,
    StimulusKind,
    protocol_entry,
    protocol_table,
    sample,
)


def test_square_plateau_and_after_protocol(square_t2: Stimulus) -> None:
    assert square_t2.eval(0.5) == 1.0
    assert square_t2.eval(1.5) == 0.0
    assert square_t2.eval(square_t2.period * square_t2.n_periods + 1) == 0.0


def test_square_is_zero_before_start() -> None:
    wave = Stimulus.square(period=2.0, n_periods=2, t_start=3.0)
    assert wave.eval(1.0) == 0.0
    assert wave.eval_derivative(1.0) == 0.0
    assert wave.eval(3.5) == 1.0


def test_amplitude_one_encodes_point_two_molar() -> None:
    assert Stimulus.square().molarity == pytest.approx(0.2)
    assert Stimulus.square(amplitude=2.5).molarity == pytest.approx(0.5)


def test_derivative_on_edges_and_plateaus(square_t2: Stimulus) -> None:
    assert square_t2.eval_derivative(0.025) == pytest.approx(20.0)
    assert square_t2.eval_derivative(1.025) == pytest.approx(-20.0)
    assert square_t2.eval_derivative(0.5) == 0.0
    assert square_t2.eval_derivative(1.5) == 0.0


def test_derivative_at_breakpoints_is_mean_of_sides() -> None:
    wave = Stimulus.square(period=2.0, rise_time=0.25, n_periods=2)
    assert wave.eval_derivative(0.0) == pytest.approx(2.0)
    assert wave.eval_derivative(0.25) == pytest.approx(2.0)
    assert wave.eval_derivative(1.0) == pytest.approx(-2.0)
    assert wave.eval_derivative(1.25) == pytest.approx(-2.0)


@pytest.mark.parametrize("t", [0.025, 1.025, 4.01, 5.04])
def test_derivative_matches_central_difference(square_t2: Stimulus, t: float) -> None:
    h = 1e-6
    numeric = (square_t2.eval(t + h) - square_t2.eval(t - h)) / (2 * h)
    # rounding t + h near t = 5 moves eval by about 1e-14, so the quotient is good to about 1e-8
    assert numeric == pytest.approx(square_t2.eval_derivative(t), abs=1e-7)


def test_protocol_table_matches_shock_protocol() -> None:
    table = protocol_table()
    assert [(entry.period, entry.n_periods) for entry in table] == [
        (2, 10),
        (4, 8),
        (8, 8),
        (16, 6),
        (32, 4),
        (64, 4),
    ]
    assert table[0] == ProtocolEntry(2.0, 10)
    assert protocol_entry(16.0).n_periods == 6
    assert protocol_entry(16.0).duration == 96.0
    assert protocol_entry(3.0) is None


def test_square_is_periodic_inside_window(square_t2: Stimulus) -> None:
    for t in np.linspace(0.1, 15.9, 97):
        assert square_t2.eval(t) == pytest.approx(square_t2.eval(t + 2.0), abs=1e-12)


def test_values_stay_within_amplitude() -> None:
    wave = Stimulus.square(amplitude=0.7, period=4.0, rise_time=0.3, n_periods=3)
    values, _ = sample(wave, np.linspace(0.0, 14.0, 7001))
    assert values.min() >= 0.0
    assert values.max() <= 0.7


def test_derivative_integrates_back_to_signal() -> None:
    dt = 2.0**-10
    wave = Stimulus.square(period=2.0, rise_time=1.0 / 16, n_periods=3, t_start=2.0**-11)
    times = np.arange(7 * 1024 + 1) * dt
    values, slopes = sample(wave, times)
    integral = np.concatenate(([0.0], np.cumsum(0.5 * dt * (slopes[1:] + slopes[:-1]))))
    assert np.max(np.abs(integral - (values - values[0]))) < 1e-6


def test_half_duty_spends_equal_time_high_and_low() -> None:
    wave = Stimulus.square(period=2.0, rise_time=0.05, n_periods=1)
    values, _ = sample(wave, np.arange(200000) * 1e-5)
    above = np.count_nonzero(values > 0.5)
    assert above / values.size == pytest.approx(0.5, abs=1e-3)


def test_step_and_constant_kinds() -> None:
    step = Stimulus(kind=StimulusKind.STEP, amplitude=2.0, rise_time=0.5, t_start=1.0)
    assert step.eval(0.5) == 0.0
    assert step.eval(1.25) == pytest.approx(1.0)
    assert step.eval(100.0) == 2.0
    assert step.eval_derivative(1.25) == pytest.approx(4.0)
    assert step.eval_derivative(3.0) == 0.0

    constant = Stimulus(kind=StimulusKind.CONSTANT, amplitude=0.3)
    assert constant.eval(0.0) == 0.3
    assert constant.eval_derivative(12.0) == 0.0


def test_piecewise_from_samples_interpolates_linearly() -> None:
    wave = Stimulus.from_samples([0.0, 1.0, 3.0], [0.0, 2.0, 0.0])
    assert wave.eval(0.5) == pytest.approx(1.0)
    assert wave.eval(2.0) == pytest.approx(1.0)
    assert wave.eval_derivative(0.5) == pytest.approx(2.0)
    assert wave.eval_derivative(2.0) == pytest.approx(-1.0)
    assert wave.eval_derivative(1.0) == pytest.approx(0.5)
    assert wave.eval(10.0) == 0.0
    assert wave.eval_derivative(10.0) == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"amplitude": -1.0},
        {"period": 0.0},
        {"duty": 1.0},
        {"duty": 0.0},
        {"rise_time": 0.0},
        {"rise_time": 0.6},
        {"duty": 0.9, "rise_time": 0.2},
        {"n_periods": 0},
    ],
)
def test_invalid_square_is_rejected_at_construction(kwargs) -> None:
    params = {"period": 2.0, "rise_time": 0.05, "duty": 0.5}
    params.update(kwargs)
    with pytest.raises(ConfigError):
        Stimulus.square(**params)


def test_piecewise_needs_increasing_times() -> None:
    with pytest.raises(ConfigError):
        Stimulus.from_samples([0.0, 1.0, 1.0], [0.0, 1.0, 2.0])

from __future__ import annotations

import numpy as np
import pytest

from osmoid.errors import ConfigError, IntegrationDivergedError
from osmoid.services.integrator import TimeGrid
from osmoid.services.plant_models import (
    BASAL_LEVEL,
    PLANT_PRESETS,
    FirstOrderDerivPlant,
    FirstOrderPlant,
    OutputStage,
    PolyPlant,
    SecondOrderPlant,
    StageMode,
    build_plant,
    dynamics,
    linearized,
    observe,
    plant_from_estimates,
    simulate_plant,
    true_parameters,
)
from osmoid.services.signal_generator import Stimulus, StimulusKind

NO_STAGE = OutputStage(StageMode.NONE)


def constant(amplitude: float = 1.0) -> Stimulus:
    return Stimulus(kind=StimulusKind.CONSTANT, amplitude=amplitude)


def test_rates_follow_each_plant_form() -> None:
    assert dynamics(FirstOrderPlant(0.155, 0.075), [1.0], 2.0, 0.0)[0] == pytest.approx(-0.155 + 0.15)
    deriv = FirstOrderDerivPlant(0.155, 0.075, 0.00797)
    assert dynamics(deriv, [0.0], 1.0, 2.0)[0] == pytest.approx(0.075 + 2 * 0.00797)
    second = SecondOrderPlant(0.1995, 0.0825, 0.1025)
    rates = dynamics(second, [1.0, 0.5], 1.0, 0.0)
    assert rates.tolist() == pytest.approx([0.5, -0.1995 * 0.5 - 0.0825 + 0.1025])
    poly = PolyPlant(beta1=-1.0, c1=1.0, beta2=0.5, beta3=0.25, c2=2.0, c3=1.0)
    assert dynamics(poly, [2.0], 1.0, 0.0)[0] == pytest.approx(-2.0 + 1.0 + 2.0 + 2.0 + 2.0 + 1.0)


def test_state_length_must_match_order() -> None:
    with pytest.raises(ValueError):
        dynamics(SecondOrderPlant(0.2, 0.1, 0.1), [1.0], 0.0, 0.0)


def test_first_order_settles_at_gain_ratio() -> None:
    trace = simulate_plant(FirstOrderPlant(0.155, 0.075), constant(), TimeGrid(0.0, 100.0, 0.01), NO_STAGE)
    assert trace.y[-1] == pytest.approx(0.075 / 0.155, rel=1e-5)
    assert trace.y[0] == 0.0


def test_second_order_settles_at_gain_ratio() -> None:
    plant = SecondOrderPlant(0.1995, 0.0825, 0.1025)
    trace = simulate_plant(plant, constant(), TimeGrid(0.0, 200.0, 0.05), NO_STAGE)
    assert trace.y[-1] == pytest.approx(0.1025 / 0.0825, rel=1e-4)
    assert trace.plant_states.shape == (len(trace), 2)


def test_linear_poly_plant_reproduces_first_order(square_for) -> None:
    stimulus = square_for(8.0, 64.0)
    grid = TimeGrid(0.0, 64.0, 0.01)
    linear = simulate_plant(FirstOrderPlant(0.155, 0.075), stimulus, grid, NO_STAGE)
    poly = simulate_plant(PolyPlant(beta1=-0.155, c1=0.075), stimulus, grid, NO_STAGE)
    assert np.array_equal(linear.y, poly.y)


def test_simulated_trace_mirrors_plant_in_estimator_columns(square_for) -> None:
    plant = FirstOrderPlant(0.155, 0.075)
    trace = simulate_plant(plant, square_for(8.0, 16.0), TimeGrid(0.0, 16.0, 0.01), OutputStage(StageMode.ADDITIVE_OFFSET))
    assert trace.y[0] == pytest.approx(BASAL_LEVEL)
    assert np.array_equal(trace.y, trace.y_hat)
    assert not np.any(trace.e)
    assert np.all(trace.a_hat == 0.155)
    assert trace.true_params == (0.155, 0.075, 0.0)
    assert trace.final_params == (0.155, 0.075, 0.0)


def test_initial_state_is_honoured() -> None:
    trace = simulate_plant(FirstOrderPlant(1.0, 0.0), constant(0.0), TimeGrid(0.0, 1.0, 0.001), NO_STAGE, x0=[2.0])
    assert trace.y[-1] == pytest.approx(2.0 * np.exp(-1.0), rel=1e-8)


def test_output_stages() -> None:
    additive = OutputStage(StageMode.ADDITIVE_OFFSET)
    floor = OutputStage("floor")
    assert additive.apply(0.5) == pytest.approx(1.737)
    assert additive.invert(1.737) == pytest.approx(0.5)
    assert floor.apply(0.5) == pytest.approx(BASAL_LEVEL)
    assert floor.apply(2.0) == 2.0
    assert floor.invert(2.0) == 2.0
    assert NO_STAGE.apply(0.5) == 0.5
    assert observe(FirstOrderPlant(0.155, 0.075), additive, [0.5]) == pytest.approx(1.737)


@pytest.mark.parametrize("kwargs", [{"mode": "bogus"}, {"r0": -1.0}])
def test_output_stage_validation(kwargs) -> None:
    with pytest.raises(ConfigError):
        OutputStage(**kwargs)


def test_unstable_plants_need_explicit_override() -> None:
    with pytest.raises(ConfigError):
        FirstOrderPlant(-0.1, 0.075)
    with pytest.raises(ConfigError):
        FirstOrderDerivPlant(0.0, 0.075, 0.01)
    with pytest.raises(ConfigError):
        SecondOrderPlant(0.2, -0.1, 0.1)
    assert FirstOrderPlant(-0.1, 0.075, allow_unstable=True).a == -0.1


def test_non_finite_coefficients_are_rejected() -> None:
    with pytest.raises(ConfigError):
        FirstOrderPlant(float("nan"), 0.075)
    with pytest.raises(ConfigError):
        PolyPlant(beta1=-0.1, c1=float("inf"))


def test_unstable_plant_run_diverges() -> None:
    plant = FirstOrderPlant(-20.0, 1.0, allow_unstable=True)
    with pytest.raises(IntegrationDivergedError):
        simulate_plant(plant, constant(), TimeGrid(0.0, 50.0, 0.01), NO_STAGE)


def test_linearization_and_true_parameters() -> None:
    poly = PolyPlant(beta1=-0.155, c1=0.075, beta3=-0.05)
    assert linearized(poly) == (0.155, 0.075, 0.0)
    assert true_parameters(poly) is None
    deriv = FirstOrderDerivPlant(0.155, 0.075, 0.00797)
    assert true_parameters(deriv) == (0.155, 0.075, 0.00797)


def test_plant_from_estimates_picks_matching_form() -> None:
    assert isinstance(plant_from_estimates("fo", (0.1, 0.2, 0.3)), FirstOrderPlant)
    assert isinstance(plant_from_estimates("first-order-deriv", (0.1, 0.2, 0.3)), FirstOrderDerivPlant)
    rebuilt = plant_from_estimates("so-filtered", (-0.1, 0.2, 0.3))
    assert isinstance(rebuilt, SecondOrderPlant)
    assert rebuilt.linearized() == (-0.1, 0.2, 0.3)
    with pytest.raises(ConfigError):
        plant_from_estimates("poly", (0.1, 0.2, 0.3))


def test_presets_build_with_overrides() -> None:
    assert set(PLANT_PRESETS) == {"first-order", "first-order-deriv", "second-order", "poly"}
    plant, stage = build_plant("second-order", {"c": 0.2}, {"mode": "none"})
    assert plant.linearized() == (0.1995, 0.0825, 0.2)
    assert stage.mode is StageMode.NONE
    plant, stage = build_plant("first-order")
    assert stage.mode is StageMode.ADDITIVE_OFFSET
    with pytest.raises(ConfigError):
        build_plant("third-order")
    with pytest.raises(ConfigError):
        build_plant("first-order", {"c": 1.0})


def test_stable_plant_decays_monotonically_without_input() -> None:
    trace = simulate_plant(FirstOrderPlant(0.155, 0.075), constant(0.0), TimeGrid(0.0, 20.0, 0.01), NO_STAGE, x0=[2.0])
    assert np.all(np.diff(trace.y) < 0)


def test_observe_maps_each_sample_through_the_stage() -> None:
    additive = OutputStage(StageMode.ADDITIVE_OFFSET)
    y = observe(FirstOrderPlant(0.155, 0.075), additive, np.array([[0.0], [0.5], [1.0]]))
    assert y.tolist() == pytest.approx([BASAL_LEVEL, BASAL_LEVEL + 0.5, BASAL_LEVEL + 1.0])
    second = SecondOrderPlant(0.1995, 0.0825, 0.1025)
    assert observe(second, NO_STAGE, np.array([[1.0, 9.0], [2.0, 9.0]])).tolist() == [1.0, 2.0]
    with pytest.raises(ValueError):
        observe(second, NO_STAGE, np.array([[1.0], [2.0]]))

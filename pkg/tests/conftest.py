from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT_DIR = Path(__file__).resolve().parent.parent
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from osmoid.services.signal_generator import Stimulus  # noqa: E402


@pytest.fixture
def square_t2() -> Stimulus:
    return Stimulus.square(amplitude=1.0, period=2.0, duty=0.5, rise_time=0.05, n_periods=10)


@pytest.fixture
def square_for():
    """Square wave covering [0, horizon] exactly."""

    def build(period: float, horizon: float) -> Stimulus:
        return Stimulus.square(period=period, n_periods=max(1, int(round(horizon / period))))

    return build

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from osmoid.errors import DatasetError, TraceError

TRACE_COLUMNS: Tuple[str, ...] = ("t", "u", "y", "yhat", "e", "a_hat", "b_hat", "c_hat")
SECOND_ORDER_COLUMNS: Tuple[str, ...] = ("e1", "e2", "eps")
PARAMETER_COLUMNS: Tuple[str, ...] = ("a_hat", "b_hat", "c_hat")


@dataclass(slots=True)
class Dataset:
    """Measured (t, u, y) samples, e.g. nuclear Hog1 under a salt protocol."""

    name: str
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    metadata: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not (self.t.shape == self.u.shape == self.y.shape) or self.t.ndim != 1:
            raise DatasetError(f"dataset {self.name!r}: t, u and y must be 1-D and of equal length")
        for column in ("t", "u", "y"):
            values = getattr(self, column)
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                raise DatasetError(f"dataset {self.name!r}: non-finite {column} at row {bad[0] + 1}")
        steps = np.flatnonzero(np.diff(self.t) <= 0)
        if steps.size:
            raise DatasetError(f"dataset {self.name!r}: time is not strictly increasing at row {steps[0] + 2}")

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def samples(self) -> list[Tuple[float, float, float]]:
        return [(float(t), float(u), float(y)) for t, u, y in zip(self.t, self.u, self.y)]


@dataclass(slots=True)
class RunTrace:
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    e: np.ndarray
    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: np.ndarray
    u_dot: Optional[np.ndarray] = None
    # state error against the reference, kept for every estimator kind
    e1: Optional[np.ndarray] = None
    e2: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None
    estimator: Optional[str] = None
    true_params: Optional[Tuple[float, float, float]] = None
    error_weights: Optional[Tuple[float, float, float]] = None
    plant_states: Optional[np.ndarray] = None
    estimator_states: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in ("u", "y", "y_hat", "e", "a_hat", "b_hat", "c_hat", "u_dot", "e1", "e2", "eps"):
            values = getattr(self, name)
            if values is not None and len(values) != n:
                raise TraceError(f"trace column {name} has {len(values)} samples, expected {n}")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls, second_order: bool = False) -> "RunTrace":
        blank = np.empty(0)
        extra = {"e1": blank, "e2": blank, "eps": blank} if second_order else {}
        return cls(t=blank, u=blank, y=blank, y_hat=blank, e=blank, a_hat=blank, b_hat=blank, c_hat=blank, **extra)

    @property
    def is_second_order(self) -> bool:
        return self.e2 is not None

    @property
    def final_params(self) -> Tuple[float, float, float]:
        if not len(self):
            raise TraceError("empty trace has no final parameters")
        return (float(self.a_hat[-1]), float(self.b_hat[-1]), float(self.c_hat[-1]))

    def columns(self) -> Dict[str, np.ndarray]:
        """CSV columns in file order."""
        data = {
            "t": self.t,
            "u": self.u,
            "y": self.y,
            "yhat": self.y_hat,
            "e": self.e,
            "a_hat": self.a_hat,
            "b_hat": self.b_hat,
            "c_hat": self.c_hat,
        }
        if self.is_second_order:
            data["e1"] = self.e1
            data["e2"] = self.e2
            data["eps"] = self.eps
        return data

    def channel(self, name: str) -> np.ndarray:
        available = self.columns()
        if name == "u_dot" and self.u_dot is not None:
            return self.u_dot
        if name == "e1" and self.e1 is not None:
            return self.e1
        if name not in available:
            raise KeyError(name)
        return available[name]

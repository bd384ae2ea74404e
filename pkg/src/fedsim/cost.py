"""Closed-form training-time comparison of federated vs. centralized learning.

With ``K_n`` the time to move a unit of data, ``K_s`` the time to train on
it, ``N = K_n / K_s``, ``A`` equal-sized agencies and a model ``M_r`` times
the size of the data it was trained on, centralized time over federated
time is::

    (1 + N) / (1/A + M_r * N)

Values above 1 mean the federated route is faster by that factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CostParams:
    k_n: float
    k_s: float
    agencies: int
    model_ratio: float

    def __post_init__(self):
        if not self.k_s > 0:
            raise ValueError("K_s must be positive")
        if self.k_n < 0:
            raise ValueError("K_n must be non-negative")
        if self.agencies < 1:
            raise ValueError("need at least one agency")
        if self.model_ratio < 0:
            raise ValueError("model reduction ratio must be non-negative")

    @classmethod
    def from_ratio(cls, n: float, agencies: int, model_ratio: float) -> "CostParams":
        """Parameters with ``K_s = 1`` and network/compute ratio ``n``."""
        return cls(k_n=float(n), k_s=1.0, agencies=agencies, model_ratio=model_ratio)

    @property
    def n(self) -> float:
        return self.k_n / self.k_s


def time_ratio(cp: CostParams) -> float:
    n = cp.n
    return (1.0 + n) / (1.0 / cp.agencies + cp.model_ratio * n)


def asymptotic_ratio(cp: CostParams) -> float:
    """Gain when the model is negligible next to the data (``M_r -> 0``)."""
    return cp.agencies * (1.0 + cp.n)


def sweep_curve(n_grid, agencies, model_ratio: float) -> list[tuple[int, float, float]]:
    """Rows ``(A, N, ratio)`` ordered by A then N, one per grid point."""
    n_grid = sorted(float(n) for n in n_grid)
    agencies = sorted(int(a) for a in agencies)
    if not n_grid or not agencies:
        raise ValueError("empty sweep grid")
    return [
        (a, n, time_ratio(CostParams.from_ratio(n, a, model_ratio)))
        for a in agencies
        for n in n_grid
    ]


def default_n_grid(n_min: float = 0.1, n_max: float = 100.0, steps: int = 50) -> np.ndarray:
    if steps == 1:
        return np.array([n_min])
    if n_min > 0:
        return np.geomspace(n_min, n_max, steps)
    return np.linspace(n_min, n_max, steps)


DEFAULT_AGENCIES = (2, 5, 10, 20)
DEFAULT_MODEL_RATIO = 0.01

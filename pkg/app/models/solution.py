# app/models/solution.py
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.models.ode import SpectralODESolution


@dataclass(frozen=True, eq=False)
class SpectralSolution:
    """
    Null solution w(x, y) = sum_k v(x, lambda_k) c_k e_k(y) sampled on
    x_grid x y_grid, with c_k = <u, e_k> * sum_{j in bands} psi_j(lambda_k).

    `dw` and `d2w` are the x-derivatives taken from the ODE itself.
    """
    bands: Tuple[int, ...]
    epsilon: float
    radius: float
    C_x0: float
    x_grid: np.ndarray
    y_grid: np.ndarray
    indices: np.ndarray
    coefficients: np.ndarray
    solutions: Tuple[SpectralODESolution, ...]
    w: np.ndarray
    dw: np.ndarray
    d2w: np.ndarray
    trace: np.ndarray
    exponential_weight: float

    @property
    def x0(self) -> float:
        return float(self.x_grid[(self.x_grid.size - 1) // 2])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([sol.lam for sol in self.solutions])

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.w, axis=1)

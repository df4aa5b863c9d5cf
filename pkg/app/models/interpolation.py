# app/models/interpolation.py
from dataclasses import dataclass

import numpy as np

from app.core.exceptions import InvalidInputError
from app.models.operator import Grid1D


@dataclass(frozen=True, eq=False)
class BandSequence:
    """
    Grid functions alpha_0..alpha_K on the unknowns of `grid`, with their L2
    and H^s2 norms on the zero-padded periodic embedding.
    """
    alpha: np.ndarray  # (K + 1, n_unknowns)
    grid: Grid1D
    s2: float
    l2_norms: np.ndarray
    hs_norms: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        if alpha.shape[0] < 1 or alpha.shape[1] != self.grid.n_unknowns:
            raise InvalidInputError(
                f"Band sequence must have shape (K + 1, {self.grid.n_unknowns}), got {alpha.shape}"
            )
        if not (np.all(np.isfinite(self.l2_norms)) and np.all(np.isfinite(self.hs_norms))):
            raise InvalidInputError("Band sequence norms must be finite")
        object.__setattr__(self, "alpha", alpha)

    @property
    def K(self) -> int:
        return self.alpha.shape[0] - 1

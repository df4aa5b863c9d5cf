# app/services/fourier.py

from typing import Optional, Sequence

import numpy as np

from app.config.settings import settings
from app.core.exceptions import InvalidInputError
from app.models.operator import Boundary, Grid1D


def bracket(xi, eta=0.0) -> np.ndarray:
    """<(xi, eta)> = sqrt(e^2 + xi^2 + eta^2)."""
    return np.hypot(np.e, np.hypot(xi, eta))


class PeriodicEmbedding:
    """
    Zero-padded periodic copy of a grid, the frame for every Fourier norm.

    Dirichlet unknowns are placed after one boundary node and padded with
    zeros up to `factor * n` points; periodic grids are used as they are.
    All transforms are unitary (norm="ortho"), so Euclidean norms carry over.
    """

    def __init__(self, grid: Grid1D, factor: Optional[int] = None):
        self.grid = grid
        if grid.boundary == Boundary.PERIODIC:
            self.size = grid.n
            self.offset = 0
        else:
            factor = settings.EMBEDDING_FACTOR if factor is None else factor
            if factor < 1:
                raise InvalidInputError(f"Embedding factor must be >= 1, got {factor}")
            self.size = factor * grid.n
            self.offset = 1
        self.h = grid.h
        self.xi = 2.0 * np.pi * np.fft.fftfreq(self.size, d=self.h)

    def embed(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape[-1] != self.grid.n_unknowns:
            raise InvalidInputError(
                f"Grid function has {u.shape[-1]} values, grid has {self.grid.n_unknowns} unknowns"
            )
        out = np.zeros(u.shape[:-1] + (self.size,), dtype=u.dtype)
        out[..., self.offset : self.offset + u.shape[-1]] = u
        return out

    def transform(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fft(self.embed(u), norm="ortho", axis=-1)

    def multiplier_norm(
        self, u: np.ndarray, symbol, modes: Optional[Sequence[float]] = None
    ) -> np.ndarray:
        """
        |symbol(xi, eta) u_hat| for a grid function or a batch of them.

        `u` has shape (..., n_unknowns); with `modes` it has shape
        (..., n_modes, n_unknowns) and the norm sums over the modes.
        """
        u_hat = self.transform(u)
        if modes is None:
            weights = symbol(self.xi, 0.0)
            return np.sqrt(np.sum(np.abs(weights * u_hat) ** 2, axis=-1))
        eta = np.asarray(modes, dtype=float)[:, None]
        weights = symbol(self.xi[None, :], eta)
        return np.sqrt(np.sum(np.abs(weights * u_hat) ** 2, axis=(-2, -1)))

    def log_norm(self, u: np.ndarray, modes: Optional[Sequence[float]] = None):
        return self.multiplier_norm(u, lambda xi, eta: np.log(bracket(xi, eta)), modes)

    def sobolev_norm(self, u: np.ndarray, s: float, modes: Optional[Sequence[float]] = None):
        return self.multiplier_norm(u, lambda xi, eta: bracket(xi, eta) ** s, modes)


def periodic_frequencies(n: int, h: float) -> np.ndarray:
    return 2.0 * np.pi * np.fft.fftfreq(n, d=h)

# app/models/spectral.py
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from app.models.operator import DiscreteOperator

ArrayLike = Union[float, np.ndarray]


def _sigma(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    positive = s > 0
    out[positive] = np.exp(-1.0 / s[positive])
    return out


def smooth_step(t: ArrayLike) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    u = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    shape = u.shape
    u = u.reshape(-1)
    a = _sigma(u)
    b = _sigma(1.0 - u)
    return (a / (a + b)).reshape(shape)


def smooth_cutoff(t: ArrayLike) -> np.ndarray:
    """Even cutoff, 1 on [-1, 1], 0 outside (-e, e), nonincreasing in |t|."""
    t = np.abs(np.asarray(t, dtype=float))
    return smooth_step((np.e - t) / (np.e - 1.0))


@dataclass(frozen=True)
class CutoffFamily:
    """Band functions psi_0 = phi(l), psi_j = phi(l e^-j) - phi(l e^{1-j})."""
    j_max: int

    @property
    def indices(self) -> range:
        return range(self.j_max + 1)

    def psi(self, j: int, lam: ArrayLike) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if j == 0:
            return smooth_cutoff(lam)
        return smooth_cutoff(lam * np.exp(-j)) - smooth_cutoff(lam * np.exp(1 - j))

    def table(self, lam: ArrayLike) -> np.ndarray:
        """psi_j(lam_k) as an array of shape (j_max + 1, len(lam))."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return np.stack([self.psi(j, lam) for j in self.indices])

    @staticmethod
    def support(j: int) -> Tuple[float, float]:
        return (float(np.exp(j - 1)) if j > 0 else 0.0, float(np.exp(j + 1)))


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: DiscreteOperator
    max_residual: float
    orthonormality_error: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """<u, e_k> for every eigenvector (columns of u are handled independently)."""
        return self.eigenvectors.T @ np.asarray(u)

    def synthesize(self, coefficients: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ coefficients


@dataclass(frozen=True, eq=False)
class BandProjectionSet:
    decomposition: SpectralDecomposition
    cutoffs: CutoffFamily
    weights: np.ndarray  # psi_j(lambda_k), shape (j_max + 1, n)
    partition_error: float
    square_sum_range: Tuple[float, float]

    @property
    def j_max(self) -> int:
        return self.cutoffs.j_max

    @property
    def indices(self) -> range:
        return self.cutoffs.indices

    def project(self, j: int, u: np.ndarray) -> np.ndarray:
        dec = self.decomposition
        coeffs = dec.coefficients(u)
        weights = self.weights[j] if coeffs.ndim == 1 else self.weights[j][:, None]
        return dec.synthesize(weights * coeffs)

    def project_all(self, u: np.ndarray) -> np.ndarray:
        """Stack of P_j u for every band, shape (j_max + 1, n)."""
        coeffs = self.decomposition.coefficients(np.asarray(u, dtype=float))
        return (self.decomposition.eigenvectors @ (self.weights * coeffs).T).T

    def band_members(self, j: int) -> np.ndarray:
        """Indices k with psi_j(lambda_k) > 0."""
        return np.flatnonzero(self.weights[j] > 0)

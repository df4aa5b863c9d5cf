# app/services/spectral_calculus.py

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import eigh
from tenacity import (
    Retrying,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from app.config.settings import settings
from app.core.cache import cache_manager
from app.core.exceptions import InequalityViolation, InvalidInputError, NumericalError
from app.models.operator import DiscreteOperator
from app.models.spectral import BandProjectionSet, CutoffFamily, SpectralDecomposition

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SandwichReport:
    lower: float
    middle: float
    upper: float
    holds: bool


def _eigh_with_retry(matrix: np.ndarray):
    """Dense symmetric eigensolver, falling back through LAPACK drivers."""
    drivers = list(settings.EIGH_DRIVERS)
    retrying = Retrying(
        stop=stop_after_attempt(settings.EIGH_RETRY_ATTEMPTS),
        wait=wait_exponential(multiplier=0.01, max=0.1),
        retry=retry_if_exception_type(LinAlgError),
        reraise=True,
    )
    try:
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                driver = drivers[(number - 1) % len(drivers)]
                if number > 1:
                    logger.warning(f"eigh retry #{number} with driver '{driver}'")
                eigenvalues, eigenvectors = eigh(matrix, driver=driver)
    except LinAlgError as exc:
        raise NumericalError(
            f"Symmetric eigensolver failed to converge: {exc}",
            {"n": int(matrix.shape[0]), "drivers": drivers},
        ) from exc
    return eigenvalues, eigenvectors


def evaluate_on_spectrum(f: ScalarFunction, lambdas: np.ndarray) -> np.ndarray:
    """Evaluate f on every eigenvalue and reject non-finite values."""
    with np.errstate(all="ignore"):
        values = np.asarray(f(lambdas), dtype=float)
    values = np.broadcast_to(values, lambdas.shape).astype(float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise InvalidInputError(
            f"Function is not finite at eigenvalue lambda_{k} = {lambdas[k]!r}",
            {"index": k, "eigenvalue": float(lambdas[k])},
        )
    return values


def band_count(lambda_max: float) -> int:
    """J_max = floor(log lambda_max) + 1, the last band with e^(J-1) <= lambda_max."""
    if lambda_max <= 1.0:
        return 0
    return int(np.floor(np.log(lambda_max))) + 1


class SpectralCalculusService:
    """
    Eigendecomposition of positive operators and the functional calculus on
    top of it: f(B), the spectral resolution E_lambda and the bands P_j.
    """

    def decompose(self, op: DiscreteOperator) -> SpectralDecomposition:
        matrix = op.matrix
        n = matrix.shape[0]
        if n > settings.MAX_DENSE_N:
            raise InvalidInputError(
                f"Dense eigensolver is limited to n <= {settings.MAX_DENSE_N}, got {n}"
            )
        if not np.array_equal(matrix, matrix.T):
            asym = float(np.max(np.abs(matrix - matrix.T)))
            raise InvalidInputError(
                f"Operator matrix is not symmetric (max asymmetry {asym:.3g})",
                {"asymmetry": asym},
            )

        key = cache_manager.make_key("eigh", matrix)
        cached = cache_manager.get(key)
        if cached is not None:
            eigenvalues, eigenvectors, residual, gram = cached
            return SpectralDecomposition(eigenvalues, eigenvectors, op, residual, gram)

        eigenvalues, eigenvectors = _eigh_with_retry(matrix)
        residuals = np.linalg.norm(matrix @ eigenvectors - eigenvectors * eigenvalues, axis=0)
        scaled = residuals / np.maximum(1.0, np.abs(eigenvalues))
        worst = float(scaled.max())
        gram = float(np.max(np.abs(eigenvectors.T @ eigenvectors - np.eye(n))))
        if worst > settings.EIG_RESIDUAL_TOL or gram > settings.ORTHONORMALITY_TOL:
            k = int(np.argmax(scaled))
            raise NumericalError(
                f"Eigendecomposition failed its checks: worst residual {worst:.3e} "
                f"at lambda_{k} = {eigenvalues[k]:.6g}, orthonormality error {gram:.3e}",
                {"worst_residual": worst, "index": k, "orthonormality_error": gram},
            )
        if eigenvalues[0] < 1.0 - settings.POSITIVITY_TOL:
            raise InvalidInputError(
                f"Operator is not shifted positive: lambda_1 = {eigenvalues[0]!r}",
                {"lambda_1": float(eigenvalues[0])},
            )

        cache_manager.set(key, (eigenvalues, eigenvectors, worst, gram))
        logger.info(
            f"Decomposed n={n}: lambda in [{eigenvalues[0]:.6g}, {eigenvalues[-1]:.6g}], "
            f"residual {worst:.2e}"
        )
        return SpectralDecomposition(eigenvalues, eigenvectors, op, worst, gram)

    def apply_function(
        self, f: ScalarFunction, dec: SpectralDecomposition, u: np.ndarray
    ) -> np.ndarray:
        """f(B)u = sum_k f(lambda_k) <u, e_k> e_k. Columns of a 2-D `u` are mapped separately."""
        values = evaluate_on_spectrum(f, dec.eigenvalues)
        coeffs = dec.coefficients(u)
        if coeffs.ndim == 2:
            values = values[:, None]
        return dec.synthesize(values * coeffs)

    def spectral_projector(self, dec: SpectralDecomposition, lam: float) -> np.ndarray:
        """E_lambda = sum over lambda_k <= lambda of e_k e_k^T (right-continuous)."""
        selected = dec.eigenvectors[:, dec.eigenvalues <= lam]
        return selected @ selected.T

    def apply_spectral_projector(
        self, dec: SpectralDecomposition, lam: float, u: np.ndarray
    ) -> np.ndarray:
        return self.apply_function(lambda t: (t <= lam).astype(float), dec, u)

    def build_bands(self, dec: SpectralDecomposition) -> BandProjectionSet:
        cutoffs = CutoffFamily(j_max=band_count(dec.lambda_max))
        weights = cutoffs.table(dec.eigenvalues)

        partition_error = float(np.max(np.abs(weights.sum(axis=0) - 1.0)))
        squares = np.sum(weights**2, axis=0)
        square_range = (float(squares.min()), float(squares.max()))
        tol = settings.PARTITION_TOL
        if (
            partition_error > tol
            or square_range[0] < 0.5 - tol
            or square_range[1] > 1.0 + tol
        ):
            raise NumericalError(
                "Band cutoffs do not form a partition of unity on the spectrum",
                {"partition_error": partition_error, "square_sum_range": square_range},
            )
        logger.info(f"Built {cutoffs.j_max + 1} bands for lambda_max={dec.lambda_max:.6g}")
        return BandProjectionSet(
            decomposition=dec,
            cutoffs=cutoffs,
            weights=weights,
            partition_error=partition_error,
            square_sum_range=square_range,
        )

    def norm_sandwich_check(
        self,
        f: ScalarFunction,
        dec: SpectralDecomposition,
        u: np.ndarray,
        bands: Optional[BandProjectionSet] = None,
    ) -> SandwichReport:
        """
        sum_j f(e^(j-1))^2 |P_j u|^2 <= |f(B) u|^2 <= 2 sum_j f(e^(j+1))^2 |P_j u|^2.

        The lower anchor is clamped to 1, the left end of the domain of f.
        """
        bands = bands or self.build_bands(dec)
        j = np.arange(bands.j_max + 1, dtype=float)
        lower_anchor = np.maximum(1.0, np.exp(j - 1.0))
        upper_anchor = np.exp(j + 1.0)

        points = np.concatenate([dec.eigenvalues, lower_anchor, upper_anchor])
        order = np.argsort(points, kind="stable")
        values = evaluate_on_spectrum(f, points)[order]
        if np.any(values < 0):
            raise InvalidInputError("Sandwich check needs a nonnegative function")
        drops = np.diff(values)
        if np.any(drops < -settings.INEQUALITY_SLACK * max(1.0, float(np.max(values)))):
            k = int(np.argmin(drops))
            raise InvalidInputError(
                f"Function is not nondecreasing near lambda = {points[order][k]:.6g}",
                {"at": float(points[order][k])},
            )

        f_lambda = evaluate_on_spectrum(f, dec.eigenvalues)
        f_lower = evaluate_on_spectrum(f, lower_anchor)
        f_upper = evaluate_on_spectrum(f, upper_anchor)
        coeffs2 = dec.coefficients(u) ** 2
        band_mass = (bands.weights**2) @ coeffs2  # |P_j u|^2

        middle = float(np.sum(f_lambda**2 * coeffs2))
        lower = float(np.sum(f_lower**2 * band_mass))
        upper = float(2.0 * np.sum(f_upper**2 * band_mass))

        slack = settings.INEQUALITY_SLACK
        holds = lower <= middle * (1 + slack) + slack and middle <= upper * (1 + slack) + slack
        if not holds:
            raise InequalityViolation(
                "norm sandwich",
                lower if lower > middle else middle,
                middle if lower > middle else upper,
                {"lower": lower, "middle": middle, "upper": upper},
            )
        return SandwichReport(lower=lower, middle=middle, upper=upper, holds=True)

    def projection_mass(self, bands: BandProjectionSet, u: np.ndarray) -> np.ndarray:
        """|P_j u|^2 for every band."""
        coeffs2 = bands.decomposition.coefficients(u) ** 2
        return (bands.weights**2) @ coeffs2

    def band_diagnostics(
        self, bands: BandProjectionSet, u: Optional[np.ndarray] = None
    ) -> List[Dict]:
        mass = self.projection_mass(bands, u) if u is not None else None
        rows = []
        for j in bands.indices:
            lo, hi = bands.cutoffs.support(j)
            members = bands.band_members(j)
            row = {
                "j": j,
                "support": [lo, hi],
                "eigenvalue_count": int(members.size),
                "weight_sum": float(bands.weights[j].sum()),
            }
            if mass is not None:
                row["mass"] = float(mass[j])
            rows.append(row)
        return rows


spectral_calculus = SpectralCalculusService()


def decompose(op: DiscreteOperator) -> SpectralDecomposition:
    return spectral_calculus.decompose(op)


def apply_function(f: ScalarFunction, dec: SpectralDecomposition, u: np.ndarray) -> np.ndarray:
    return spectral_calculus.apply_function(f, dec, u)


def build_bands(dec: SpectralDecomposition) -> BandProjectionSet:
    return spectral_calculus.build_bands(dec)


def norm_sandwich_check(
    f: ScalarFunction, dec: SpectralDecomposition, u: np.ndarray
) -> SandwichReport:
    return spectral_calculus.norm_sandwich_check(f, dec, u)

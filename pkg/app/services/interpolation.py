# app/services/interpolation.py

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.config.settings import settings
from app.core.exceptions import InequalityViolation, InvalidInputError
from app.models.estimates import FamilyKind, TestFamily
from app.models.interpolation import BandSequence
from app.models.operator import Boundary, DiscreteOperator, Grid1D
from app.models.spectral import BandProjectionSet
from app.schemas.reports import AssemblyReport, InequalityReport
from app.services.estimate_lab import estimate_lab
from app.services.fourier import PeriodicEmbedding, bracket
from app.services.spectral_calculus import spectral_calculus

logger = logging.getLogger(__name__)

# Bands scanned for the low-band supremum; later intervals only lower it
LOW_BAND_SCAN = 120

CONVENTIONS = ("floor", "ceil")


def _check_parameters(s2: float, epsilon: float) -> None:
    if s2 <= 0 or epsilon <= 0:
        raise InvalidInputError(f"s2 and epsilon must be positive, got s2={s2}, epsilon={epsilon}")


def split_index(xi, s2: float, epsilon: float) -> np.ndarray:
    """R(xi) = 2 log(s2 log<xi> / (2 eps)), clamped to 0."""
    _check_parameters(s2, epsilon)
    argument = s2 * np.log(bracket(np.asarray(xi, dtype=float))) / (2.0 * epsilon)
    return np.maximum(0.0, 2.0 * np.log(argument))


def low_band_constant(s2: float, epsilon: float) -> float:
    """
    sup over L = log<xi> >= 1 of L^2 exp(-2 s2 L) sum_{k <= floor R} exp(2 eps sqrt(e^k)).

    floor R(xi) >= K exactly when L >= L_K = 2 eps e^(K/2) / s2, so the sum is
    constant on [L_K, L_(K+1)) and the maximum there sits at 1/s2 clipped
    into the interval.
    """
    _check_parameters(s2, epsilon)
    k = np.arange(LOW_BAND_SCAN + 1)
    log_sums = np.logaddexp.accumulate(2.0 * epsilon * np.sqrt(np.exp(k)))
    starts = 2.0 * epsilon * np.exp(k / 2.0) / s2
    best = -np.inf
    for K in k:
        lo = 1.0 if K == 0 else max(1.0, starts[K])
        hi = starts[K + 1] if K < LOW_BAND_SCAN else np.inf
        if hi <= lo:
            continue
        L = float(np.clip(1.0 / s2, lo, hi))
        best = max(best, 2.0 * np.log(L) - 2.0 * s2 * L + log_sums[K])
    return float(np.exp(best))


def proof_chain_constants(s2: float, epsilon: float) -> Tuple[float, float]:
    """sup of L^2 R exp(-s2 L) and of L^2 (R + 1) exp(-s2 L) over L >= 1, sampled."""
    _check_parameters(s2, epsilon)
    L = np.linspace(1.0, max(10.0, 40.0 / s2), 8001)
    R = np.maximum(0.0, 2.0 * np.log(s2 * L / (2.0 * epsilon)))
    base = L**2 * np.exp(-s2 * L)
    return float(np.max(base * R)), float(np.max(base * (R + 1.0)))


def high_band_constant(s2: float, epsilon: float) -> float:
    return 3.0 * (4.0 * epsilon / s2) ** 2


class InterpolationService:
    """Low/high band Cauchy-Schwarz splits of |log<xi> u_hat|^2 and their assembly."""

    # sequences

    def make_sequence(self, alpha: np.ndarray, grid: Grid1D, s2: float) -> BandSequence:
        alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        embedding = PeriodicEmbedding(grid)
        return BandSequence(
            alpha=alpha,
            grid=grid,
            s2=float(s2),
            l2_norms=np.linalg.norm(alpha, axis=1),
            hs_norms=embedding.sobolev_norm(alpha, s2),
        )

    def sequence_from_bands(
        self, bands: BandProjectionSet, u: np.ndarray, s2: float
    ) -> BandSequence:
        """alpha_j = P_j u."""
        return self.make_sequence(bands.project_all(u), bands.decomposition.source.grid, s2)

    def random_sequence(
        self, grid: Grid1D, count: int, s2: float, rng: np.random.Generator
    ) -> BandSequence:
        if count < 1:
            raise InvalidInputError(f"Sequence needs at least one term, got {count}")
        alpha = rng.standard_normal((count, grid.n_unknowns))
        return self.make_sequence(alpha, grid, s2)

    # the two inequalities

    def _prepared(self, seq: BandSequence, s2: float, epsilon: float):
        embedding = PeriodicEmbedding(seq.grid)
        alpha_hat = embedding.transform(seq.alpha)  # (K + 1, size)
        log2 = np.log(bracket(embedding.xi)) ** 2
        R = split_index(embedding.xi, s2, epsilon)
        return alpha_hat, log2, R

    def low_band_inequality(
        self, seq: BandSequence, s2: float, epsilon: float
    ) -> InequalityReport:
        """|sum_{k <= floor R} log<xi> alpha_k_hat|^2 <= C sum_k exp(-2 eps sqrt(e^k)) |alpha_k|_{H^s2}^2."""
        alpha_hat, log2, R = self._prepared(seq, s2, epsilon)
        top = np.minimum(np.floor(R).astype(int), seq.K)
        partial = np.cumsum(alpha_hat, axis=0)
        picked = partial[top, np.arange(partial.shape[1])]
        lhs = float(np.sum(log2 * np.abs(picked) ** 2))

        k = np.arange(seq.K + 1)
        hs_norms = seq.hs_norms if seq.s2 == s2 else self.make_sequence(
            seq.alpha, seq.grid, s2
        ).hs_norms
        weights = np.exp(-2.0 * epsilon * np.sqrt(np.exp(k)))
        constant = low_band_constant(s2, epsilon)
        rhs = float(constant * np.sum(weights * hs_norms**2))
        chain, corrected = proof_chain_constants(s2, epsilon)
        return self._report(
            "low-band estimate",
            lhs,
            rhs,
            constant,
            "floor",
            {"proof_chain_constant": chain, "proof_chain_constant_corrected": corrected},
        )

    def high_band_inequality(
        self, seq: BandSequence, s2: float, epsilon: float, convention: str = "floor"
    ) -> InequalityReport:
        """
        |sum_{k >= R} log<xi> alpha_k_hat|^2 <= 3 (4 eps / s2)^2 sum_k e^k |alpha_k|^2.

        "ceil" starts the sum at ceil R, "floor" at floor R (one extra band).
        """
        if convention not in CONVENTIONS:
            raise InvalidInputError(f"Unknown convention '{convention}'", {"known": CONVENTIONS})
        alpha_hat, log2, R = self._prepared(seq, s2, epsilon)
        start = np.floor(R) if convention == "floor" else np.ceil(R)
        k = np.arange(seq.K + 1)[:, None]
        mask = k >= start[None, :]
        tail = np.sum(np.where(mask, alpha_hat, 0.0), axis=0)
        lhs = float(np.sum(log2 * np.abs(tail) ** 2))

        constant = high_band_constant(s2, epsilon)
        rhs = float(constant * np.sum(np.exp(k[:, 0]) * seq.l2_norms**2))
        return self._report("high-band estimate", lhs, rhs, constant, convention)

    @staticmethod
    def _report(
        name: str,
        lhs: float,
        rhs: float,
        constant: float,
        convention: str,
        details: Optional[Dict] = None,
    ) -> InequalityReport:
        holds = lhs <= rhs * (1.0 + settings.INEQUALITY_SLACK)
        if not holds:
            raise InequalityViolation(name, lhs, rhs, {"convention": convention})
        return InequalityReport(
            lhs=lhs,
            rhs=rhs,
            ratio=lhs / rhs if rhs > 0 else 0.0,
            constant=constant,
            holds=holds,
            convention=convention,
            details=details or {},
        )

    # assembly

    def _split(self, u: np.ndarray, bands: BandProjectionSet, s2: float, epsilon: float):
        """(logterm, high part I, low part II) with low k <= floor R and high k > floor R."""
        grid = bands.decomposition.source.grid
        embedding = PeriodicEmbedding(grid)
        alpha_hat = embedding.transform(bands.project_all(u))
        log2 = np.log(bracket(embedding.xi)) ** 2
        top = np.minimum(np.floor(split_index(embedding.xi, s2, epsilon)).astype(int), bands.j_max)
        low_mask = np.arange(bands.j_max + 1)[:, None] <= top[None, :]
        low = np.sum(np.where(low_mask, alpha_hat, 0.0), axis=0)
        high = np.sum(np.where(low_mask, 0.0, alpha_hat), axis=0)
        u_hat = embedding.transform(u)
        return (
            float(np.sum(log2 * np.abs(u_hat) ** 2)),
            float(np.sum(log2 * np.abs(high) ** 2)),
            float(np.sum(log2 * np.abs(low) ** 2)),
        )

    def split_check(
        self, u: np.ndarray, op: DiscreteOperator, s2: float, epsilon: float
    ) -> InequalityReport:
        """|log<xi> u_hat|^2 <= 2 (low part) + 2 (high part)."""
        _check_parameters(s2, epsilon)
        bands = spectral_calculus.build_bands(spectral_calculus.decompose(op))
        logterm, high, low = self._split(np.asarray(u, dtype=float), bands, s2, epsilon)
        return self._report("band split", logterm, 2.0 * (high + low), 2.0, "floor")

    @staticmethod
    def _check_support(
        u: np.ndarray, grid: Grid1D, support: Optional[Tuple[float, float]] = None
    ) -> None:
        """u vanishes on the outer unknowns, and outside `support` when one is given."""
        where = "periodic cell" if grid.boundary == Boundary.PERIODIC else "Dirichlet interval"
        if np.any(u[[0, -1]] != 0):
            raise InvalidInputError(f"u must vanish at the ends of the {where}")
        if support is None:
            return
        lo, hi = support
        if not grid.y_min <= lo < hi <= grid.y_max:
            raise InvalidInputError(
                f"Support [{lo:.6g}, {hi:.6g}] is not inside [{grid.y_min:.6g}, {grid.y_max:.6g}]"
            )
        y = grid.unknowns
        outside = (y < lo) | (y > hi)
        if np.any(u[outside] != 0):
            raise InvalidInputError(
                f"u does not vanish outside [{lo:.6g}, {hi:.6g}]",
                {"outside_nonzero": int(np.count_nonzero(u[outside]))},
            )

    def assemble_theorem(
        self,
        u: np.ndarray,
        op: DiscreteOperator,
        s2: float,
        epsilon: float,
        support: Optional[Tuple[float, float]] = None,
    ) -> AssemblyReport:
        """
        |log<xi> u_hat|^2 <= eps <op u, u> + C |u|^2 through the band split with
        eps_i = s2 sqrt(eps / (96 e)): the high part is bounded by the operator
        form, the low part by the measured band smoothing ratios.
        """
        _check_parameters(s2, epsilon)
        u = np.asarray(u, dtype=float)
        grid = op.grid
        if u.shape != (grid.n_unknowns,):
            raise InvalidInputError(
                f"u must have {grid.n_unknowns} values, got shape {u.shape}"
            )
        self._check_support(u, grid, support)
        norm2 = float(u @ u)
        if norm2 == 0:
            raise InvalidInputError("u must be nonzero")

        dec = spectral_calculus.decompose(op)
        bands = spectral_calculus.build_bands(dec)
        eps_i = s2 * np.sqrt(epsilon / (96.0 * np.e))
        logterm, I, II = self._split(u, bands, s2, eps_i)
        form = op.quadratic_form(u)
        I_bound = 48.0 * (eps_i / s2) ** 2 * np.e * form

        occupied = [j for j in bands.indices if bands.band_members(j).size > 0]
        probe = TestFamily(kind=FamilyKind.GAUSSIAN_BUMPS, members=u[None, None, :], seed=0)
        smoothing = estimate_lab.smoothing_ratio(op, occupied, s2, probe, bands)
        mass = spectral_calculus.projection_mass(bands, u)

        contributions: List[Dict[str, float]] = []
        worst = 0.0
        for row in smoothing.bands:
            weighted = float(np.exp(-2.0 * eps_i * np.sqrt(np.exp(row.j))) * row.ratio**2)
            worst = max(worst, weighted)
            contributions.append(
                {
                    "j": row.j,
                    "mass": float(mass[row.j]),
                    "smoothing_ratio": row.ratio,
                    "weighted": weighted,
                }
            )
        chain_C = 2.0 * low_band_constant(s2, eps_i) * worst
        measured_C = max(0.0, (logterm - epsilon * form) / norm2)

        slack = settings.INEQUALITY_SLACK
        split_holds = logterm <= 2.0 * (I + II) * (1.0 + slack)
        bound_holds = measured_C <= chain_C * (1.0 + slack) + slack
        if not split_holds:
            raise InequalityViolation("band split", logterm, 2.0 * (I + II))
        if not bound_holds:
            raise InequalityViolation(
                "assembled estimate", measured_C, chain_C, {"epsilon": epsilon}
            )
        logger.info(
            f"Assembly eps={epsilon:.4g}: measured C={measured_C:.6g}, chain C={chain_C:.6g}"
        )
        return AssemblyReport(
            epsilon=float(epsilon),
            s2=float(s2),
            interpolation_epsilon=float(eps_i),
            I=I,
            II=II,
            logterm=logterm,
            form=form,
            norm2=norm2,
            I_bound=float(I_bound),
            measured_C=measured_C,
            chain_C=chain_C,
            split_holds=split_holds,
            bound_holds=bound_holds,
            band_contributions=contributions,
        )


interpolation = InterpolationService()


def low_band_inequality(seq: BandSequence, s2: float, epsilon: float) -> InequalityReport:
    return interpolation.low_band_inequality(seq, s2, epsilon)


def high_band_inequality(seq: BandSequence, s2: float, epsilon: float) -> InequalityReport:
    return interpolation.high_band_inequality(seq, s2, epsilon)


def assemble_theorem(
    u: np.ndarray,
    op: DiscreteOperator,
    s2: float,
    epsilon: float,
    support: Optional[Tuple[float, float]] = None,
) -> AssemblyReport:
    return interpolation.assemble_theorem(u, op, s2, epsilon, support)

# app/services/estimate_lab.py

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma

from app.config.settings import settings
from app.core.exceptions import InequalityViolation, InvalidInputError
from app.models.estimates import EstimateKind, TestFamily, Verdict
from app.models.operator import DiscreteOperator, Grid1D, ModalOperator
from app.models.solution import SpectralSolution
from app.models.spectral import BandProjectionSet, smooth_step
from app.schemas.reports import (
    BandRatio,
    ClosedGraphReport,
    ClosedGraphRow,
    EstimateReport,
    MixedNormReport,
    SmoothingReport,
    StabilityCheck,
)
from app.schemas.scenario import FamilySpec, OperatorSpec
from app.services.families import family_factory
from app.services.fourier import PeriodicEmbedding, bracket, periodic_frequencies
from app.services.grid_operator import build_modal_from_spec, grid_from_spec
from app.services.spectral_calculus import spectral_calculus

logger = logging.getLogger(__name__)

AnyOperator = Union[DiscreteOperator, ModalOperator]
Comparisons = Dict[str, Tuple[AnyOperator, TestFamily]]


def _modal(op: AnyOperator) -> ModalOperator:
    return op if isinstance(op, ModalOperator) else ModalOperator.single(op)


def _check_family(op: ModalOperator, family: TestFamily) -> None:
    if family.count == 0:
        raise InvalidInputError("Test family is empty")
    expected = (op.n_modes, op.grid.n_unknowns)
    if family.members.shape[1:] != expected:
        raise InvalidInputError(
            f"Family members have shape {family.members.shape[1:]}, operator expects {expected}"
        )


def quadratic_forms(op: ModalOperator, members: np.ndarray) -> np.ndarray:
    """<op u, u> for every member of a mode-stacked batch (count, n_modes, n)."""
    forms = np.zeros(members.shape[0])
    for k, mode_op in enumerate(op.operators):
        block = members[:, k, :]
        forms += np.einsum("ij,ij->i", block, block @ mode_op.matrix)
    return forms


class EstimateLabService:
    """
    Measures the constants of the superlogarithmic, subelliptic and smoothing
    estimates on finite test families and classifies the trend.
    """

    def log_norm(
        self, u: np.ndarray, grid: Grid1D, modes: Optional[Sequence[float]] = None
    ) -> np.ndarray:
        """|log<xi> u_hat| on the zero-padded periodic embedding of `grid`."""
        return PeriodicEmbedding(grid).log_norm(u, modes)

    # constants

    def _superlog_constants(
        self, op: ModalOperator, family: TestFamily, epsilons: Sequence[float]
    ):
        members = family.members
        log2 = self.log_norm(members, op.grid, op.modes) ** 2
        forms = quadratic_forms(op, members)
        norm2 = family.norms() ** 2
        ratios = (log2[None, :] - np.asarray(epsilons)[:, None] * forms[None, :]) / norm2
        return ratios  # (len(epsilons), count)

    def _subelliptic_constants(self, op: ModalOperator, family: TestFamily, delta: float):
        members = family.members
        gain2 = PeriodicEmbedding(op.grid).sobolev_norm(members, delta, op.modes) ** 2
        forms = quadratic_forms(op, members)
        norm2 = family.norms() ** 2
        return (gain2 / (forms + norm2))[None, :]

    # verdicts

    @staticmethod
    def _summarize(ratios: np.ndarray) -> Tuple[List[float], List[int]]:
        worst = np.argmax(ratios, axis=1)
        constants = np.maximum(0.0, ratios[np.arange(ratios.shape[0]), worst])
        return [float(c) for c in constants], [int(k) for k in worst]

    @staticmethod
    def _trend(ratios_at_trend: np.ndarray, family: TestFamily) -> Tuple[Dict[int, float], bool]:
        """Per-scale constants and whether they grow TREND_FACTOR-fold over three consecutive scales."""
        if family.scales is None:
            return {}, False
        scales = np.asarray(family.scales)
        trend = {
            int(m): float(max(0.0, ratios_at_trend[scales == m].max()))
            for m in np.unique(scales)
        }
        triggered = False
        for m, c in trend.items():
            if m + 1 in trend and m + 2 in trend:
                if trend[m + 2] >= settings.TREND_FACTOR * max(c, 1.0):
                    triggered = True
        return trend, triggered

    @staticmethod
    def _stability(name: str, base: List[float], other: List[float]) -> StabilityCheck:
        changes = [
            abs(a - b) / max(abs(a), 1.0) for a, b in zip(base, other)
        ]
        worst = max(changes) if changes else 0.0
        return StabilityCheck(
            compared_with=name,
            values=other,
            max_relative_change=worst,
            stable=worst <= settings.STABILITY_TOLERANCE,
        )

    def _classify(self, report: EstimateReport) -> EstimateReport:
        if report.trend_triggered:
            report.verdict = Verdict.VIOLATION_TREND
        elif report.stability and all(check.stable for check in report.stability):
            report.verdict = Verdict.CONSISTENT
        else:
            report.verdict = Verdict.INCONCLUSIVE
            logger.warning(f"{report.estimate.value} estimate is inconclusive")
        logger.info(f"{report.estimate.value} verdict: {report.verdict.value}")
        return report

    def superlog_test(
        self,
        op: AnyOperator,
        family: TestFamily,
        epsilons: Sequence[float],
        comparisons: Optional[Comparisons] = None,
    ) -> EstimateReport:
        """
        C_eps = max over the family of (|log<xi> u_hat|^2 - eps <op u, u>) / |u|^2,
        clipped at 0. `comparisons` maps a label ("refined", "enlarged") to an
        operator and family the constants must be stable against.
        """
        op = _modal(op)
        _check_family(op, family)
        epsilons = [float(eps) for eps in epsilons]
        if not epsilons or any(eps <= 0 for eps in epsilons):
            raise InvalidInputError("epsilons must be a nonempty list of positive numbers")

        ratios = self._superlog_constants(op, family, epsilons)
        C_eps, worst = self._summarize(ratios)
        at_trend = self._superlog_constants(op, family, [settings.TREND_EPSILON])[0]
        trend, triggered = self._trend(at_trend, family)

        stability = []
        for name, (other_op, other_family) in (comparisons or {}).items():
            other_op = _modal(other_op)
            _check_family(other_op, other_family)
            other, _ = self._summarize(self._superlog_constants(other_op, other_family, epsilons))
            stability.append(self._stability(name, C_eps, other))

        report = EstimateReport(
            estimate=EstimateKind.SUPERLOG,
            epsilons=epsilons,
            C_eps=C_eps,
            worst_member=worst,
            trend=trend,
            trend_triggered=triggered,
            stability=stability,
            seed=family.seed,
            details={"family": family.kind.value, "members": family.count},
        )
        return self._classify(report)

    def subelliptic_test(
        self,
        op: AnyOperator,
        family: TestFamily,
        delta: float,
        comparisons: Optional[Comparisons] = None,
    ) -> EstimateReport:
        """C(delta) = max over the family of |<D>^delta u|^2 / (<op u, u> + |u|^2)."""
        if not 0.0 < delta <= 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1], got {delta}")
        op = _modal(op)
        _check_family(op, family)

        ratios = self._subelliptic_constants(op, family, delta)
        C, worst = self._summarize(ratios)
        trend, triggered = self._trend(ratios[0], family)
        stability = []
        for name, (other_op, other_family) in (comparisons or {}).items():
            other_op = _modal(other_op)
            _check_family(other_op, other_family)
            other, _ = self._summarize(self._subelliptic_constants(other_op, other_family, delta))
            stability.append(self._stability(name, C, other))

        report = EstimateReport(
            estimate=EstimateKind.SUBELLIPTIC,
            epsilons=[float(delta)],
            C_eps=C,
            worst_member=worst,
            trend=trend,
            trend_triggered=triggered,
            stability=stability,
            seed=family.seed,
            details={"delta": float(delta), "family": family.kind.value},
        )
        return self._classify(report)

    def _harness(
        self, spec: OperatorSpec, family_spec: FamilySpec, seed: int
    ) -> Tuple[ModalOperator, TestFamily, Comparisons]:
        grid = grid_from_spec(spec.grid)
        op = build_modal_from_spec(spec, grid)
        family = family_factory.build(family_spec, grid, op.n_modes, seed)

        fine = grid.refined()
        fine_op = build_modal_from_spec(spec, fine)
        fine_family = family_factory.build(family_spec, fine, op.n_modes, seed)
        enlarged = family_factory.enlarge(family_spec, grid, op.n_modes, seed)
        return op, family, {"refined": (fine_op, fine_family), "enlarged": (op, enlarged)}

    def superlog_verdict(
        self,
        spec: OperatorSpec,
        family_spec: FamilySpec,
        epsilons: Sequence[float],
        seed: int,
    ) -> EstimateReport:
        """Superlog test with one grid refinement and one family enlargement."""
        op, family, comparisons = self._harness(spec, family_spec, seed)
        return self.superlog_test(op, family, epsilons, comparisons)

    def subelliptic_verdict(
        self, spec: OperatorSpec, family_spec: FamilySpec, delta: float, seed: int
    ) -> EstimateReport:
        op, family, comparisons = self._harness(spec, family_spec, seed)
        return self.subelliptic_test(op, family, delta, comparisons)

    # smoothing of the bands

    def smoothing_ratio(
        self,
        op: DiscreteOperator,
        band_indices: Sequence[int],
        s2: float,
        family: TestFamily,
        bands: Optional[BandProjectionSet] = None,
    ) -> SmoothingReport:
        """
        max over the family of |P_j u|_{H^s2} / |P_j u| per band, and the
        smallest eps_fit >= 0 with log ratio ~ eps_fit sqrt(e^j) + log C_tilde.
        """
        if s2 <= 0:
            raise InvalidInputError(f"s2 must be positive, got {s2}")
        if family.members.shape[1] != 1:
            raise InvalidInputError("Smoothing ratios need a single-mode family")
        if bands is None:
            bands = spectral_calculus.build_bands(spectral_calculus.decompose(op))
        embedding = PeriodicEmbedding(op.grid)
        U = family.members[:, 0, :].T  # (n, count)

        rows = []
        for j in band_indices:
            if not 0 <= j <= bands.j_max:
                raise InvalidInputError(f"Band {j} outside 0..{bands.j_max}")
            members = bands.band_members(j)
            if members.size == 0:
                raise InvalidInputError(f"Band {j} contains no eigenvalues")
            projected = bands.project(j, U).T  # (count, n)
            l2 = np.linalg.norm(projected, axis=1)
            hs = embedding.sobolev_norm(projected, s2)
            ratio = np.where(l2 > 0, hs / np.where(l2 > 0, l2, 1.0), 0.0)
            k = int(np.argmax(ratio))
            rows.append(
                BandRatio(
                    j=int(j),
                    ratio=float(ratio[k]),
                    worst_member=k,
                    eigenvalue_count=int(members.size),
                )
            )

        scale = np.sqrt(np.exp([row.j for row in rows]))
        ratios = np.array([row.ratio for row in rows])
        usable = ratios > 0
        epsilon_fit = 0.0
        if np.count_nonzero(usable) >= 2:
            slope, _ = np.polyfit(scale[usable], np.log(ratios[usable]), 1)
            epsilon_fit = max(float(slope), 0.0)
        C_tilde = float(np.max(ratios * np.exp(-epsilon_fit * scale))) if rows else 0.0
        logger.info(f"Smoothing ratios over {len(rows)} bands: eps_fit={epsilon_fit:.4g}")
        return SmoothingReport(s2=s2, bands=rows, epsilon_fit=epsilon_fit, C_tilde=C_tilde)

    # Sobolev machinery

    def sobolev_multiplier_check(
        self, s1: float, s2: float, xi_grid: np.ndarray, eta_grid: np.ndarray
    ) -> float:
        """sup of (1+xi^2)^s1 (1+eta^2)^s2 / (1+xi^2+eta^2)^(s1+s2) over the grid."""
        if s1 < 0 or s2 < 0:
            raise InvalidInputError(f"s1 and s2 must be nonnegative, got {s1}, {s2}")
        xi2, eta2 = np.meshgrid(
            np.square(np.asarray(xi_grid, dtype=float)),
            np.square(np.asarray(eta_grid, dtype=float)),
            indexing="ij",
        )
        total = 1.0 + xi2 + eta2
        m = ((1.0 + xi2) / total) ** s1 * ((1.0 + eta2) / total) ** s2
        sup = float(np.max(m))
        if sup > 1.0:
            raise InequalityViolation("Sobolev multiplier bound", sup, 1.0, {"s1": s1, "s2": s2})
        return sup

    @staticmethod
    def mixed_norm_constant(s1: float, n_x: int, h_x: float) -> Tuple[float, float]:
        """(discrete, continuum) |g|_{L2} with g_hat = (1+xi^2)^(-s1)."""
        if s1 <= 0.5:
            raise InvalidInputError(f"Mixed-norm estimate needs s1 > 1/2, got {s1}")
        xi = periodic_frequencies(n_x, h_x)
        K = float(np.mean((1.0 + xi**2) ** (-s1)))
        continuum = np.sqrt(np.sqrt(np.pi) * gamma(s1 - 0.5) / gamma(s1) / (2.0 * np.pi))
        return float(np.sqrt(K / h_x)), float(continuum)

    def mixed_norm_check(
        self, u: np.ndarray, s1: float, s2: float, h_x: float, h_y: float
    ) -> MixedNormReport:
        """
        sup_x |u(x, .)|_{H^s2} <= C |u|_{H^(s1+s2)} for a periodic 2-D grid
        function u[x, y], with (1 + |.|^2) weights.
        """
        u = np.asarray(u, dtype=float)
        if u.ndim != 2:
            raise InvalidInputError(f"Mixed-norm check needs a 2-D array, got shape {u.shape}")
        n_x, n_y = u.shape
        constant, continuum = self.mixed_norm_constant(s1, n_x, h_x)
        xi = periodic_frequencies(n_x, h_x)
        eta = periodic_frequencies(n_y, h_y)

        rows_hat = np.fft.fft(u, axis=1, norm="ortho")
        row_norms = np.sqrt(np.sum((1.0 + eta**2) ** s2 * np.abs(rows_hat) ** 2, axis=1))
        lhs = float(np.sqrt(h_y) * np.max(row_norms))

        u_hat = np.fft.fft2(u, norm="ortho")
        weight = (1.0 + xi[:, None] ** 2 + eta[None, :] ** 2) ** (s1 + s2)
        rhs = float(np.sqrt(h_x * h_y * np.sum(weight * np.abs(u_hat) ** 2)))

        bound = constant * rhs
        holds = lhs <= bound * (1.0 + settings.INEQUALITY_SLACK)
        if not holds:
            raise InequalityViolation(
                "mixed-norm Sobolev estimate", lhs, bound, {"s1": s1, "s2": s2}
            )
        return MixedNormReport(
            s1=s1,
            s2=s2,
            lhs=lhs,
            rhs=rhs,
            constant=constant,
            continuum_constant=continuum,
            ratio=lhs / rhs if rhs else 0.0,
            holds=holds,
        )

    # closed graph measurement

    def closed_graph_constant(
        self, sol: SpectralSolution, s: float, inner_radii: Sequence[float]
    ) -> ClosedGraphReport:
        """
        |chi w|_{H^s} / |w|_{L2} for cutoffs chi equal to 1 on the inner box of
        x-radius r' and vanishing outside the x-radius r of the solution. The
        y-box shrinks by the same factor r'/r. `trace_ratio` puts the trace
        w(x0, .) in H^s over the same denominator.
        """
        r = sol.radius
        radii = sorted(float(rp) for rp in inner_radii)
        if not radii:
            raise InvalidInputError("closed_graph_constant needs at least one inner radius")
        if radii[0] <= 0 or radii[-1] >= r:
            raise InvalidInputError(
                f"Inner radii must lie in (0, {r}), got {radii}", {"outer_radius": r}
            )
        x = sol.x_grid
        y = sol.y_grid
        if x.size < 2:
            raise InvalidInputError("Solution has a single x sample")
        h_x = float(x[1] - x[0])
        h_y = float(y[1] - y[0])
        w = sol.w
        w_l2 = float(np.sqrt(h_x * h_y) * np.linalg.norm(w))

        pad = (2 * w.shape[0], 2 * w.shape[1])
        xi = periodic_frequencies(pad[0], h_x)
        eta = periodic_frequencies(pad[1], h_y)
        symbol = bracket(xi[:, None], eta[None, :]) ** s
        y_center = 0.5 * (y[0] + y[-1])
        y_half = 0.5 * (y[-1] - y[0]) + h_y

        trace_hat = np.fft.fft(sol.trace, n=pad[1], norm="ortho")
        trace_hs = float(np.sqrt(h_y) * np.linalg.norm(bracket(eta) ** s * trace_hat))

        rows = []
        for rp in radii:
            if w_l2 == 0:
                rows.append(ClosedGraphRow(inner_radius=rp, ratio=0.0, trace_ratio=0.0))
                continue
            chi_x = smooth_step((r - np.abs(x - sol.x0)) / (r - rp))
            inner_half = y_half * rp / r
            chi_y = smooth_step((y_half - np.abs(y - y_center)) / (y_half - inner_half))
            localized = chi_x[:, None] * w * chi_y[None, :]
            hat = np.fft.fft2(localized, s=pad, norm="ortho")
            hs = float(np.sqrt(h_x * h_y) * np.linalg.norm(symbol * hat))
            rows.append(
                ClosedGraphRow(inner_radius=rp, ratio=hs / w_l2, trace_ratio=trace_hs / w_l2)
            )

        ratios = [row.ratio for row in rows]
        nondecreasing = all(b >= a * (1 - 1e-12) for a, b in zip(ratios, ratios[1:]))
        return ClosedGraphReport(s=s, outer_radius=r, rows=rows, nondecreasing=nondecreasing)


estimate_lab = EstimateLabService()


def log_norm(u: np.ndarray, grid: Grid1D, modes: Optional[Sequence[float]] = None):
    return estimate_lab.log_norm(u, grid, modes)


def superlog_test(
    op: AnyOperator, family: TestFamily, epsilons: Sequence[float]
) -> EstimateReport:
    return estimate_lab.superlog_test(op, family, epsilons)


def subelliptic_test(op: AnyOperator, family: TestFamily, delta: float) -> EstimateReport:
    return estimate_lab.subelliptic_test(op, family, delta)

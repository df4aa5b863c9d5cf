# app/services/solution_builder.py

import logging
from typing import Dict, Iterable, Optional

import numpy as np

from app.config.settings import settings
from app.core.exceptions import CertificateError, InvalidInputError, NumericalError
from app.models.operator import CoefficientBundleX, DiscreteOperator
from app.models.solution import SpectralSolution
from app.models.spectral import BandProjectionSet, SpectralDecomposition
from app.services.grid_operator import CoefficientSplines
from app.services.spectral_calculus import spectral_calculus
from app.services.spectral_ode import japanese_bracket, spectral_ode

logger = logging.getLogger(__name__)

# exp overflows beyond this argument
_EXP_LIMIT = np.log(np.finfo(float).max)


class SolutionBuilderService:
    """Assembles w(x, y) = v(x, B) u(y) band by band and checks L w = 0."""

    @staticmethod
    def _selection(bands: BandProjectionSet, selected: Optional[Iterable[int]]):
        indices = tuple(bands.indices) if selected is None else tuple(sorted(set(selected)))
        if not indices:
            raise InvalidInputError("Band selection is empty")
        invalid = [j for j in indices if j < 0 or j > bands.j_max]
        if invalid:
            raise InvalidInputError(
                f"Bands {invalid} outside 0..{bands.j_max}", {"j_max": bands.j_max}
            )
        return indices

    def nominal_radius(self, bundle: CoefficientBundleX) -> float:
        lo, hi = bundle.span
        return min(settings.NOMINAL_RADIUS, bundle.x0 - lo, hi - bundle.x0)

    def build_solution(
        self,
        u: np.ndarray,
        bands: BandProjectionSet,
        bundle: CoefficientBundleX,
        epsilon: float,
        selected: Optional[Iterable[int]] = None,
        tol: Optional[float] = None,
        samples: Optional[int] = None,
    ) -> SpectralSolution:
        if epsilon <= 0:
            raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
        indices = self._selection(bands, selected)
        dec = bands.decomposition
        u = np.asarray(u, dtype=float)

        band_weight = bands.weights[list(indices)].sum(axis=0)
        contributing = np.flatnonzero(band_weight > 0)
        coefficients = dec.coefficients(u)[contributing] * band_weight[contributing]
        lambdas = dec.eigenvalues[contributing]

        # C_x0 on the nominal interval bounds C_x0 on every smaller one
        nominal = self.nominal_radius(bundle)
        if nominal <= 0:
            raise InvalidInputError("x0 sits on the end of the sampled x-interval")
        splines = CoefficientSplines(bundle)
        C_x0 = 0.0
        for lam in lambdas:
            M, _ = spectral_ode.growth_constant(bundle, max(lam, 1.0), nominal, splines=splines)
            C_x0 = max(C_x0, M / japanese_bracket(max(lam, 1.0)) ** 0.5)
        radius = min(epsilon / (2.0 * C_x0), nominal) if C_x0 > 0 else nominal

        solutions = []
        for k, lam in zip(contributing, lambdas):
            sol = spectral_ode.solve_ivp(bundle, max(lam, 1.0), radius, tol, samples)
            if not sol.certified:
                cert = sol.certificate
                raise CertificateError(
                    f"ODE solution at lambda_{k} = {lam:.6g} is not certified",
                    {
                        "index": int(k),
                        "lambda": float(lam),
                        "worst_ratio": cert.worst_ratio if cert else None,
                        "complete": sol.complete,
                    },
                )
            solutions.append(sol)

        x_grid = solutions[0].x_samples if solutions else np.array([bundle.x0])
        vectors = dec.eigenvectors[:, contributing]
        if solutions:
            v = np.stack([sol.v for sol in solutions], axis=1)  # (n_x, K)
            dv = np.stack([sol.dv for sol in solutions], axis=1)
            a1 = splines("a1", x_grid)[:, None]
            a0 = splines("a0", x_grid)[:, None]
            g = splines("g", x_grid)[:, None]
            d2v = a1 * dv + (a0 + g * lambdas[None, :]) * v
        else:
            v = dv = d2v = np.zeros((x_grid.size, 0))

        w = (v * coefficients) @ vectors.T
        dw = (dv * coefficients) @ vectors.T
        d2w = (d2v * coefficients) @ vectors.T
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(d2w))):
            raise NumericalError(
                "Solution samples overflow; decrease epsilon",
                {"epsilon": epsilon, "radius": radius},
            )

        trace = vectors @ coefficients
        selected_u = bands.decomposition.synthesize(
            band_weight * bands.decomposition.coefficients(u)
        )
        weight = self.exponential_weight(selected_u, epsilon, dec)
        logger.info(
            f"Built solution on bands {indices}: {contributing.size} eigenvalues, "
            f"radius={radius:.4g}, C_x0={C_x0:.4g}"
        )
        return SpectralSolution(
            bands=indices,
            epsilon=float(epsilon),
            radius=float(radius),
            C_x0=float(C_x0),
            x_grid=x_grid,
            y_grid=dec.source.grid.unknowns,
            indices=contributing,
            coefficients=coefficients,
            solutions=tuple(solutions),
            w=w,
            dw=dw,
            d2w=d2w,
            trace=trace,
            exponential_weight=weight,
        )

    def residual_check(
        self,
        sol: SpectralSolution,
        bundle: CoefficientBundleX,
        op: DiscreteOperator,
    ) -> Dict[str, float]:
        """
        Relative size of L w with the ODE's own x-derivatives, and of the same
        expression with d^2/dx^2 replaced by centered differences.
        """
        splines = CoefficientSplines(bundle)
        x = sol.x_grid
        a1 = splines("a1", x)[:, None]
        a0 = splines("a0", x)[:, None]
        g = splines("g", x)[:, None]
        By_w = sol.w @ op.matrix  # B symmetric: rows of w mapped by B

        lower_order = a1 * sol.dw + a0 * sol.w + g * By_w
        analytic = -sol.d2w + lower_order
        w_norm = float(np.linalg.norm(sol.w))
        report = {
            "w_norm": w_norm,
            "analytic": float(np.linalg.norm(analytic) / w_norm) if w_norm else 0.0,
            "y_part": float(np.linalg.norm(g * By_w) / w_norm) if w_norm else 0.0,
        }
        if x.size >= 3:
            h = x[1] - x[0]
            second = (sol.w[2:] - 2.0 * sol.w[1:-1] + sol.w[:-2]) / h**2
            fd = -second + lower_order[1:-1]
            interior = float(np.linalg.norm(sol.w[1:-1]))
            report["h_x"] = float(h)
            report["finite_difference"] = (
                float(np.linalg.norm(fd) / interior) if interior else 0.0
            )
        return report

    def exponential_weight(
        self, u: np.ndarray, epsilon: float, dec: SpectralDecomposition
    ) -> float:
        """|exp(epsilon sqrt(B)) u|, or +inf when the weight overflows."""
        if epsilon < 0:
            raise InvalidInputError(f"epsilon must be nonnegative, got {epsilon}")
        exponent = epsilon * np.sqrt(dec.lambda_max)
        if exponent > _EXP_LIMIT:
            logger.warning(
                f"exp(eps sqrt(lambda_max)) overflows (exponent {exponent:.4g}); reporting inf"
            )
            return float("inf")
        weighted = spectral_calculus.apply_function(
            lambda lam: np.exp(epsilon * np.sqrt(lam)), dec, u
        )
        return float(np.linalg.norm(weighted))

    def pj_exp_bound(
        self, u: np.ndarray, j: int, epsilon: float, bands: BandProjectionSet
    ) -> Dict[str, float]:
        """
        |exp(eps sqrt(B)) P_j u| against sum_{|j'-j|<=1} exp(eps sqrt(e^(j'+1))) |P_j' P_j u|.

        e^(j'+1) is the upper end of the support (e^(j'-1), e^(j'+1)) of psi_j'.
        """
        uj = bands.project(j, u)
        lhs = self.exponential_weight(uj, epsilon, bands.decomposition)
        rhs = 0.0
        for jp in range(max(0, j - 1), min(bands.j_max, j + 1) + 1):
            rhs += np.exp(epsilon * np.sqrt(np.exp(jp + 1.0))) * np.linalg.norm(
                bands.project(jp, uj)
            )
        return {"lhs": lhs, "rhs": float(rhs), "holds": lhs <= rhs * (1 + 1e-10)}

    def band_growth(self, sol: SpectralSolution, bands: BandProjectionSet, u: np.ndarray) -> Dict:
        """max_x |w(x, .)| against exp(eps sqrt(e^(j+1))) |P_j u| for a single band."""
        if len(sol.bands) != 1:
            raise InvalidInputError("Band growth is defined for single-band solutions")
        j = sol.bands[0]
        lhs = float(np.max(sol.row_norms()))
        rhs = float(
            np.exp(sol.epsilon * np.sqrt(np.exp(j + 1.0))) * np.linalg.norm(bands.project(j, u))
        )
        return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs * (1 + 1e-8)}


solution_builder = SolutionBuilderService()


def build_solution(
    u: np.ndarray,
    bands: BandProjectionSet,
    bundle: CoefficientBundleX,
    epsilon: float,
    selected: Optional[Iterable[int]] = None,
) -> SpectralSolution:
    return solution_builder.build_solution(u, bands, bundle, epsilon, selected)


def residual_check(
    sol: SpectralSolution, bundle: CoefficientBundleX, op: DiscreteOperator
) -> Dict[str, float]:
    return solution_builder.residual_check(sol, bundle, op)


def exponential_weight(u: np.ndarray, epsilon: float, dec: SpectralDecomposition) -> float:
    return solution_builder.exponential_weight(u, epsilon, dec)

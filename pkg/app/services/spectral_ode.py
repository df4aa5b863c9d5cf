# app/services/spectral_ode.py

import logging
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp as integrate_ivp
from scipy.special import binom

from app.config.settings import settings
from app.core.exceptions import InvalidInputError
from app.models.ode import DerivativeCascade, GrowthCertificate, SpectralODESolution, SweepRow
from app.models.operator import CoefficientBundleX
from app.services.grid_operator import CoefficientSplines

logger = logging.getLogger(__name__)

# Bell numbers: constants of the k-th derivative bound
BELL = (1, 1, 2, 5, 15)


def japanese_bracket(lam: float) -> float:
    """<lambda> = sqrt(e^2 + lambda^2)."""
    return float(np.hypot(np.e, lam))


def spectral_norm_2x2(p, q, r, s) -> np.ndarray:
    """Largest singular value of [[p, q], [r, s]], elementwise over arrays."""
    p, q, r, s = (np.asarray(v, dtype=float) for v in (p, q, r, s))
    frob2 = p * p + q * q + r * r + s * s
    det = np.abs(p * s - q * r)
    disc = np.clip((frob2 - 2.0 * det) * (frob2 + 2.0 * det), 0.0, None)
    return np.sqrt(0.5 * (frob2 + np.sqrt(disc)))


class SpectralODEService:
    """
    Integrates v'' = a1 v' + (a0 + g lambda) v, v(x0) = 1, v'(x0) = 0 for a
    normalized bundle and certifies |(v, v'/mu)| <= exp(M |x - x0|), where
    mu = <lambda>^(1/2) and M bounds the scaled generator

        Psi(x) = [[0, mu], [(a0 + g lambda) / mu, a1]].

    The unscaled bound |(v, v')| <= exp(M_unscaled |x - x0|), with M_unscaled
    the sup of |[[0, 1], [a0 + g lambda, a1]]|, is certified as well.
    """

    def _splines(self, bundle: CoefficientBundleX) -> CoefficientSplines:
        return CoefficientSplines(bundle)

    @staticmethod
    def _check_interval(bundle: CoefficientBundleX, radius: float) -> None:
        if radius <= 0:
            raise InvalidInputError(f"Radius must be positive, got {radius}")
        lo, hi = bundle.span
        eps = 1e-12 * max(1.0, abs(lo), abs(hi))
        if bundle.x0 - radius < lo - eps or bundle.x0 + radius > hi + eps:
            raise InvalidInputError(
                f"Interval [{bundle.x0 - radius:.6g}, {bundle.x0 + radius:.6g}] leaves the "
                f"sampled range [{lo:.6g}, {hi:.6g}]",
                {"x0": bundle.x0, "radius": radius},
            )

    def growth_constant(
        self,
        bundle: CoefficientBundleX,
        lam: float,
        radius: float,
        extra_points: Optional[np.ndarray] = None,
        splines: Optional[CoefficientSplines] = None,
    ) -> Tuple[float, float]:
        """(M, M_unscaled): sup over the interval of the scaled and unscaled generator norms."""
        self._check_interval(bundle, radius)
        splines = splines or self._splines(bundle)
        x = np.linspace(bundle.x0 - radius, bundle.x0 + radius, settings.CERTIFICATE_SAMPLES)
        if extra_points is not None:
            x = np.concatenate([x, extra_points])
        mu = japanese_bracket(lam) ** 0.5
        a1, a = splines.generator_entries(x, lam)
        M = float(np.max(spectral_norm_2x2(0.0, mu, a / mu, a1)))
        M_unscaled = float(np.max(spectral_norm_2x2(0.0, 1.0, a, a1)))
        return M, M_unscaled

    def _integrate(
        self,
        splines: CoefficientSplines,
        lam: float,
        mu: float,
        damping: float,
        points: np.ndarray,
        tol: float,
    ) -> Tuple[np.ndarray, bool, str]:
        x0 = points[0]
        direction = np.sign(points[-1] - x0)

        def rhs(x, z):
            a1, a = splines.generator_entries(x, lam)
            shift = damping * direction
            return np.array(
                [mu * z[1] - shift * z[0], (a / mu) * z[0] + (a1 - shift) * z[1]]
            )

        result = integrate_ivp(
            rhs,
            (points[0], points[-1]),
            np.array([1.0, 0.0]),
            method="DOP853",
            t_eval=points,
            rtol=tol,
            atol=tol,
        )
        z = np.full((2, points.size), np.nan)
        reached = result.y.shape[1]
        z[:, :reached] = result.y
        z[:, 0] = (1.0, 0.0)
        complete = result.status == 0 and reached == points.size
        return z, complete, result.message

    def solve_ivp(
        self,
        bundle: CoefficientBundleX,
        lam: float,
        radius: float,
        tol: Optional[float] = None,
        samples: Optional[int] = None,
    ) -> SpectralODESolution:
        if lam < 1:
            raise InvalidInputError(f"Spectral parameter must be >= 1, got {lam}", {"lambda": lam})
        tol = settings.ODE_TOL if tol is None else float(tol)
        if not settings.ODE_TOL_MIN <= tol <= settings.ODE_TOL_MAX:
            raise InvalidInputError(
                f"Tolerance {tol} outside [{settings.ODE_TOL_MIN}, {settings.ODE_TOL_MAX}]"
            )
        samples = samples or settings.ODE_SAMPLES
        if samples < 3 or samples % 2 == 0:
            raise InvalidInputError(f"Sample count must be odd and >= 3, got {samples}")

        splines = self._splines(bundle)
        self._check_interval(bundle, radius)
        x0 = bundle.x0
        mu = japanese_bracket(lam) ** 0.5
        half = (samples - 1) // 2
        offsets = radius * np.linspace(0.0, 1.0, half + 1)
        x_samples = np.concatenate([x0 - offsets[::-1], x0 + offsets[1:]])

        M, M_unscaled = self.growth_constant(bundle, lam, radius, x_samples, splines)
        rescaled = M * radius > settings.ODE_RESCALE_THRESHOLD
        damping = M if rescaled else 0.0

        z_right, ok_right, msg_right = self._integrate(
            splines, lam, mu, damping, x0 + offsets, tol
        )
        z_left, ok_left, msg_left = self._integrate(
            splines, lam, mu, damping, x0 - offsets, tol
        )
        z = np.concatenate([z_left[:, ::-1], z_right[:, 1:]], axis=1)
        complete = ok_left and ok_right
        message = "" if complete else f"left: {msg_left}; right: {msg_right}"
        if not complete:
            logger.warning(f"Partial ODE solution at lambda={lam:.6g}: {message}")

        log_scale = M * np.abs(x_samples - x0) if rescaled else np.zeros_like(x_samples)
        solution = SpectralODESolution(
            lam=float(lam),
            x0=float(x0),
            radius=float(radius),
            x_samples=x_samples,
            z=z,
            log_scale=log_scale,
            mu=mu,
            M=M,
            M_unscaled=M_unscaled,
            rescaled=rescaled,
            complete=complete,
            message=message,
        )
        return replace(solution, certificate=self.certify_growth(solution))

    def certify_growth(self, sol: SpectralODESolution) -> GrowthCertificate:
        """
        Check |z(x)| <= exp(M|x - x0|), |v'(x)| <= mu exp(M|x - x0|) and the
        unscaled |(v, v')(x)| <= exp(M_unscaled |x - x0|) at every sample.
        """
        finite = np.all(np.isfinite(sol.z), axis=0)
        decay = np.exp(sol.log_scale - sol.M * sol.distance)
        ratio = np.hypot(sol.z[0], sol.z[1]) * decay
        dv_ratio = np.abs(sol.z[1]) * decay
        # |(v, v')| e^{-M_unscaled d} without leaving the log_scale frame
        vdv_ratio = np.hypot(sol.z[0], sol.mu * sol.z[1]) * np.exp(
            sol.log_scale - sol.M_unscaled * sol.distance
        )
        limit = 1.0 + settings.INEQUALITY_SLACK
        violations = int(
            np.sum(ratio[finite] > limit)
            + np.sum(dv_ratio[finite] > limit)
            + np.sum(vdv_ratio[finite] > limit)
        )
        worst = float(np.max(ratio[finite])) if finite.any() else float("inf")
        worst_dv = float(np.max(dv_ratio[finite])) if finite.any() else float("inf")
        worst_vdv = float(np.max(vdv_ratio[finite])) if finite.any() else float("inf")
        certified = sol.complete and bool(finite.all()) and violations == 0
        if not certified:
            logger.warning(
                f"Growth certificate failed at lambda={sol.lam:.6g}: "
                f"worst ratio {worst:.6g}, unscaled {worst_vdv:.6g}, {violations} violations"
            )
        return GrowthCertificate(
            M=sol.M,
            C_x0=sol.M / sol.mu,
            bracket=sol.mu**2,
            mu=sol.mu,
            M_unscaled=sol.M_unscaled,
            certified=certified,
            worst_ratio=worst,
            worst_dv_ratio=worst_dv,
            worst_vdv_ratio=worst_vdv,
            violations=violations,
        )

    def derivative_cascade(
        self, sol: SpectralODESolution, bundle: CoefficientBundleX, order: int
    ) -> DerivativeCascade:
        """
        k-th x-derivative of v from z^(k) = sum_j binom(k-1, j) Psi^(j) z^(k-1-j),
        checked against Bell(k) (1 + M_k)^k exp(M |x - x0|).
        """
        if not 0 <= order <= settings.ODE_MAX_DERIVATIVE:
            raise InvalidInputError(
                f"Derivative order must be in [0, {settings.ODE_MAX_DERIVATIVE}], got {order}"
            )
        splines = self._splines(bundle)
        x = sol.x_samples
        mu, lam = sol.mu, sol.lam

        entries = []
        for j in range(order):
            a1_j, a_j = splines.generator_entries(x, lam, order=j)
            q = mu if j == 0 else 0.0
            entries.append((q, a_j / mu, a1_j))

        derivatives = [sol.z]
        for k in range(1, order + 1):
            total = np.zeros_like(sol.z)
            for j in range(k):
                q, r, s = entries[j]
                prev = derivatives[k - 1 - j]
                total[0] += binom(k - 1, j) * q * prev[1]
                total[1] += binom(k - 1, j) * (r * prev[0] + s * prev[1])
            derivatives.append(total)

        dense = np.linspace(sol.x0 - sol.radius, sol.x0 + sol.radius, settings.CERTIFICATE_SAMPLES)
        M_k = sol.M
        for j in range(1, order):
            a1_j, a_j = splines.generator_entries(dense, lam, order=j)
            M_k = max(M_k, float(np.max(np.hypot(a_j / mu, a1_j))))

        scale = np.exp(sol.log_scale)
        values = derivatives[order][0] * scale
        constant = BELL[order] * (1.0 + M_k) ** order
        bound = constant * np.exp(sol.M * sol.distance)
        ratio = np.abs(derivatives[order][0]) * np.exp(sol.log_scale - sol.M * sol.distance) / constant
        finite = np.isfinite(ratio)
        worst = float(np.max(ratio[finite])) if finite.any() else float("inf")
        certified = bool(finite.all()) and worst <= 1.0 + settings.INEQUALITY_SLACK
        return DerivativeCascade(
            order=order,
            x_samples=x,
            values=values,
            bound=bound,
            bell_constant=BELL[order],
            M_k=M_k,
            certified=certified,
            worst_ratio=worst,
        )

    def ode_residual(self, sol: SpectralODESolution, bundle: CoefficientBundleX) -> dict:
        """Centered-difference residual of v'' - a1 v' - (a0 + g lambda) v on the samples."""
        splines = self._splines(bundle)
        x = sol.x_samples
        h = x[1] - x[0]
        a1, a = splines.generator_entries(x[1:-1], sol.lam)
        ell = sol.log_scale
        # neighbours expressed in the scale of the centre sample
        v_minus = sol.z[0, :-2] * np.exp(ell[:-2] - ell[1:-1])
        v_mid = sol.z[0, 1:-1]
        v_plus = sol.z[0, 2:] * np.exp(ell[2:] - ell[1:-1])
        dv_mid = sol.z[1, 1:-1] * sol.mu
        second = (v_plus - 2.0 * v_mid + v_minus) / h**2
        residual = second - a1 * dv_mid - a * v_mid
        scale = np.abs(a1 * dv_mid) + np.abs(a * v_mid) + np.abs(second)
        relative = float(np.max(np.abs(residual) / np.maximum(scale, np.finfo(float).tiny)))
        return {
            "h": float(h),
            "max_abs": float(np.max(np.abs(residual) * np.exp(ell[1:-1]))),
            "relative": relative,
        }

    def sweep(
        self,
        bundle: CoefficientBundleX,
        lambdas: Sequence[float],
        radius: float,
        tol: Optional[float] = None,
    ) -> Tuple[List[SweepRow], List[SpectralODESolution]]:
        rows, solutions = [], []
        for lam in lambdas:
            sol = self.solve_ivp(bundle, lam, radius, tol)
            cert = sol.certificate
            rows.append(
                SweepRow(
                    lam=float(lam),
                    M=cert.M,
                    C_x0=cert.C_x0,
                    certified=cert.certified,
                    rescaled=sol.rescaled,
                )
            )
            solutions.append(sol)
            logger.debug(f"lambda={lam:.6g}: M={cert.M:.6g}, C_x0={cert.C_x0:.6g}")
        return rows, solutions

    @staticmethod
    def fit_lambda_scaling(lambdas: Sequence[float], Ms: Sequence[float]) -> Tuple[float, float]:
        """Least-squares (slope, intercept) of log M against log lambda."""
        if len(lambdas) < 2:
            raise InvalidInputError("Scaling fit needs at least two lambda values")
        slope, intercept = np.polyfit(np.log(lambdas), np.log(Ms), 1)
        return float(slope), float(intercept)


spectral_ode = SpectralODEService()


def solve_ivp(
    bundle: CoefficientBundleX,
    lam: float,
    radius: float,
    tol: Optional[float] = None,
) -> SpectralODESolution:
    return spectral_ode.solve_ivp(bundle, lam, radius, tol)


def certify_growth(sol: SpectralODESolution) -> GrowthCertificate:
    return spectral_ode.certify_growth(sol)


def derivative_cascade(
    sol: SpectralODESolution, bundle: CoefficientBundleX, order: int
) -> DerivativeCascade:
    return spectral_ode.derivative_cascade(sol, bundle, order)

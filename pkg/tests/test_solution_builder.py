# tests/test_solution_builder.py
import numpy as np
import pytest

from app.config.settings import settings
from app.core.exceptions import CertificateError, InvalidInputError
from app.models.operator import Grid1D
from app.services.grid_operator import grid_operator
from app.services.presets import kusuoka_weight, power_weight
from app.services.solution_builder import solution_builder
from app.services.spectral_calculus import spectral_calculus
from tests.conftest import make_bundle

VARIABLE_BUNDLE = make_bundle(a1=lambda x: 0.3 * np.sin(x), a0=0.5, g=lambda x: 1.0 + x**2)


@pytest.fixture
def small_laplacian():
    return grid_operator.build_divergence_operator(1.0, 1.0, Grid1D(34, 0.0, 1.0))


@pytest.fixture
def small_bands(small_laplacian):
    return spectral_calculus.build_bands(spectral_calculus.decompose(small_laplacian))


def bands_touching(bands, k):
    """Every band whose cutoff is positive at lambda_k."""
    return [j for j in bands.indices if bands.weights[j, k] > 0]


class TestBuildSolution:
    def test_single_eigenvector_gives_cosh(self, small_bands, constant_bundle):
        dec = small_bands.decomposition
        k = 2
        sol = solution_builder.build_solution(
            dec.eigenvectors[:, k],
            small_bands,
            constant_bundle,
            0.5,
            bands_touching(small_bands, k),
        )
        expected = np.outer(np.cosh(np.sqrt(dec.eigenvalues[k]) * sol.x_grid), dec.eigenvectors[:, k])
        assert np.linalg.norm(sol.w - expected) <= 1e-8 * np.linalg.norm(expected)

    def test_trace_recovers_u(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        sol = solution_builder.build_solution(u, small_bands, constant_bundle, 0.5)
        assert np.linalg.norm(sol.trace - u) <= 1e-10 * np.linalg.norm(u)
        center = (sol.x_grid.size - 1) // 2
        np.testing.assert_allclose(sol.w[center], sol.trace, atol=1e-12)
        assert sol.x0 == 0.0

    @pytest.mark.parametrize("j", [3, 5])
    def test_operator_annihilates_w(self, small_laplacian, small_bands, rng, j):
        u = rng.standard_normal(small_bands.decomposition.n)
        sol = solution_builder.build_solution(u, small_bands, VARIABLE_BUNDLE, 0.5, [j])
        report = solution_builder.residual_check(sol, VARIABLE_BUNDLE, small_laplacian)
        assert report["analytic"] <= 1e-10
        assert report["w_norm"] > 0

    def test_operator_annihilates_w_across_bands(self, rng):
        grids = {
            "constant": Grid1D(34, 0.0, 1.0),
            "power": Grid1D(66, -1.0, 1.0),
            "kusuoka": Grid1D(66, -0.5, 0.5),
        }
        weights = {
            "constant": 1.0,
            "power": power_weight(grids["power"].nodes, 1.0) + 0.05,
            "kusuoka": kusuoka_weight(grids["kusuoka"].nodes, 0.5),
        }
        builds = 0
        for name, grid in grids.items():
            op = grid_operator.build_divergence_operator(weights[name], 1.0, grid)
            bands = spectral_calculus.build_bands(spectral_calculus.decompose(op))
            u = rng.standard_normal(bands.decomposition.n)
            for j in bands.indices:
                if bands.band_members(j).size == 0:
                    continue
                sol = solution_builder.build_solution(u, bands, VARIABLE_BUNDLE, 0.5, [j])
                report = solution_builder.residual_check(sol, VARIABLE_BUNDLE, op)
                # eigenpair residual floor grows with lambda_max
                floor = max(1e-10, 1e-12 * bands.decomposition.lambda_max)
                assert report["analytic"] <= floor, (name, j)
                assert report["w_norm"] > 0
                builds += 1
        assert builds >= 20

    def test_kusuoka_band(self, kusuoka_operator, constant_bundle, rng):
        bands = spectral_calculus.build_bands(spectral_calculus.decompose(kusuoka_operator))
        assert bands.band_members(3).size > 0
        u = rng.standard_normal(bands.decomposition.n)
        residuals = []
        for samples in (21, 41, 81):
            sol = solution_builder.build_solution(
                u, bands, constant_bundle, 0.5, [3], samples=samples
            )
            # constant coefficients give C_x0 = 1, so r = eps / 2
            assert sol.C_x0 == pytest.approx(1.0)
            assert sol.radius == pytest.approx(0.25)
            assert all(part.certified for part in sol.solutions)
            report = solution_builder.residual_check(sol, constant_bundle, kusuoka_operator)
            assert report["analytic"] <= 1e-10
            residuals.append(report["finite_difference"])
        orders = np.log2(np.array(residuals[:-1]) / np.array(residuals[1:]))
        assert np.all((orders > 1.8) & (orders < 2.2))

    def test_finite_difference_order(self, small_laplacian, small_bands, constant_bundle):
        dec = small_bands.decomposition
        k = 1
        u = dec.eigenvectors[:, k]
        selected = bands_touching(small_bands, k)
        residuals = []
        for samples in (21, 41, 81):
            sol = solution_builder.build_solution(
                u, small_bands, constant_bundle, 0.5, selected, samples=samples
            )
            report = solution_builder.residual_check(sol, constant_bundle, small_laplacian)
            residuals.append(report["finite_difference"])
        orders = np.log2(np.array(residuals[:-1]) / np.array(residuals[1:]))
        assert np.all((orders > 1.8) & (orders < 2.2))

    def test_radius_follows_epsilon(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        sol = solution_builder.build_solution(u, small_bands, constant_bundle, 0.5, [4])
        # constant coefficients: M = mu, so C_x0 = 1
        assert sol.C_x0 == pytest.approx(1.0)
        assert sol.radius == pytest.approx(0.25)
        wide = solution_builder.build_solution(u, small_bands, constant_bundle, 10.0, [4])
        assert wide.radius == pytest.approx(solution_builder.nominal_radius(constant_bundle))

    def test_linear_in_u(self, small_bands, constant_bundle, rng):
        n = small_bands.decomposition.n
        u1, u2 = rng.standard_normal(n), rng.standard_normal(n)
        parts = [
            solution_builder.build_solution(u, small_bands, constant_bundle, 0.5, [4]).w
            for u in (u1, u2, u1 + u2)
        ]
        assert np.linalg.norm(parts[2] - parts[0] - parts[1]) <= 1e-10 * np.linalg.norm(parts[2])

    def test_band_growth(self, small_bands, rng):
        bundle = make_bundle(g=lambda x: 1.0 + x**2)
        u = rng.standard_normal(small_bands.decomposition.n)
        for j in (3, 4, 5):
            sol = solution_builder.build_solution(u, small_bands, bundle, 0.5, [j])
            report = solution_builder.band_growth(sol, small_bands, u)
            assert report["holds"]

    def test_band_growth_needs_one_band(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        sol = solution_builder.build_solution(u, small_bands, constant_bundle, 0.5, [3, 4])
        with pytest.raises(InvalidInputError):
            solution_builder.band_growth(sol, small_bands, u)

    def test_decoupled_when_g_vanishes(self, small_laplacian, small_bands, rng):
        bundle = make_bundle(g=0.0)
        u = rng.standard_normal(small_bands.decomposition.n)
        sol = solution_builder.build_solution(u, small_bands, bundle, 0.5, [4])
        report = solution_builder.residual_check(sol, bundle, small_laplacian)
        assert report["y_part"] == 0.0
        np.testing.assert_allclose(sol.w, np.broadcast_to(sol.trace, sol.w.shape), atol=1e-12)


class TestValidation:
    def test_empty_selection(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        with pytest.raises(InvalidInputError):
            solution_builder.build_solution(u, small_bands, constant_bundle, 0.5, [])

    def test_band_out_of_range(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        with pytest.raises(InvalidInputError):
            solution_builder.build_solution(
                u, small_bands, constant_bundle, 0.5, [small_bands.j_max + 1]
            )

    def test_epsilon_must_be_positive(self, small_bands, constant_bundle, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        with pytest.raises(InvalidInputError):
            solution_builder.build_solution(u, small_bands, constant_bundle, 0.0)

    def test_uncertified_solution_raises(self, small_bands, constant_bundle, rng, monkeypatch):
        monkeypatch.setattr(settings, "INEQUALITY_SLACK", -0.5)
        u = rng.standard_normal(small_bands.decomposition.n)
        with pytest.raises(CertificateError) as exc:
            solution_builder.build_solution(u, small_bands, constant_bundle, 0.5, [4])
        assert exc.value.exit_code == 4


class TestExponentialWeights:
    def test_zero_epsilon_is_the_norm(self, small_bands, rng):
        dec = small_bands.decomposition
        u = rng.standard_normal(dec.n)
        assert solution_builder.exponential_weight(u, 0.0, dec) == pytest.approx(np.linalg.norm(u))

    def test_eigenvector(self, small_bands):
        dec = small_bands.decomposition
        k = 4
        weight = solution_builder.exponential_weight(dec.eigenvectors[:, k], 0.1, dec)
        assert weight == pytest.approx(np.exp(0.1 * np.sqrt(dec.eigenvalues[k])), rel=1e-10)

    def test_overflow_reports_infinity(self, small_bands, rng):
        dec = small_bands.decomposition
        u = rng.standard_normal(dec.n)
        assert solution_builder.exponential_weight(u, 20.0, dec) == float("inf")

    def test_negative_epsilon(self, small_bands, rng):
        dec = small_bands.decomposition
        with pytest.raises(InvalidInputError):
            solution_builder.exponential_weight(rng.standard_normal(dec.n), -0.1, dec)

    def test_band_exponential_bound(self, small_bands, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        for j in small_bands.indices:
            report = solution_builder.pj_exp_bound(u, j, 0.1, small_bands)
            assert report["holds"]

    def test_band_bound_weights_use_the_upper_support_end(self, small_bands, rng):
        u = rng.standard_normal(small_bands.decomposition.n)
        j, epsilon = 4, 0.3
        uj = small_bands.project(j, u)
        expected = sum(
            np.exp(epsilon * np.exp((jp + 1.0) / 2.0)) * np.linalg.norm(small_bands.project(jp, uj))
            for jp in (j - 1, j, j + 1)
        )
        report = solution_builder.pj_exp_bound(u, j, epsilon, small_bands)
        assert report["rhs"] == pytest.approx(expected, rel=1e-12)
        # members of band j lie below its upper support end
        members = small_bands.band_members(j)
        assert np.all(small_bands.decomposition.eigenvalues[members] < np.exp(j + 1.0))

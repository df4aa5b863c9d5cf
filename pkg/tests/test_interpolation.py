# tests/test_interpolation.py
import numpy as np
import pytest

from app.core.exceptions import InequalityViolation, InvalidInputError
from app.schemas.scenario import FamilySpec
from app.services.estimate_lab import estimate_lab
from app.services.families import compact_bump, family_factory
from app.services.grid_operator import grid_operator
from app.services.interpolation import (
    high_band_constant,
    interpolation,
    low_band_constant,
    proof_chain_constants,
    split_index,
)
from app.services.presets import power_weight
from app.models.operator import Grid1D

SETTINGS = [(0.5, 1.0), (0.1, 0.5), (1.0, 2.0)]


def pinned(u: np.ndarray) -> np.ndarray:
    """u with its outer unknowns set to zero."""
    u = np.array(u, dtype=float)
    u[[0, -1]] = 0.0
    return u


def brute_low_band(s2: float, epsilon: float) -> float:
    L = np.linspace(1.0, 200.0, 400001)
    R = np.maximum(0.0, 2.0 * np.log(s2 * L / (2.0 * epsilon)))
    K = np.floor(R).astype(int)
    log_sums = np.logaddexp.accumulate(2.0 * epsilon * np.sqrt(np.exp(np.arange(K.max() + 1))))
    return float(np.exp(np.max(2.0 * np.log(L) - 2.0 * s2 * L + log_sums[K])))


class TestSplitIndex:
    def test_zero_frequency(self):
        assert split_index(0.0, 1.0, 0.5) == 0.0

    def test_known_value(self):
        # <xi> = e^e, so log<xi> = e and R = 2 log(e) = 2
        xi = np.sqrt(np.exp(2.0 * np.e) - np.e**2)
        assert split_index(xi, 1.0, 0.5) == pytest.approx(2.0, rel=1e-12)

    def test_parameters_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            split_index(1.0, 0.0, 0.5)
        with pytest.raises(InvalidInputError):
            split_index(1.0, 1.0, -0.5)


class TestConstants:
    @pytest.mark.parametrize("epsilon, s2", SETTINGS)
    def test_low_band_constant_matches_dense_search(self, epsilon, s2):
        constant = low_band_constant(s2, epsilon)
        brute = brute_low_band(s2, epsilon)
        assert brute <= constant * (1 + 1e-12)
        assert brute >= constant * (1 - 1e-3)

    def test_low_band_constant_grows_as_epsilon_shrinks(self):
        values = [low_band_constant(1.0, eps) for eps in (1.0, 0.3, 0.1)]
        assert values[0] <= values[1] <= values[2]

    def test_high_band_constant(self):
        assert high_band_constant(2.0, 0.5) == pytest.approx(3.0)

    def test_corrected_chain_constant_dominates(self):
        chain, corrected = proof_chain_constants(1.0, 0.1)
        assert 0 < chain <= corrected


class TestBandInequalities:
    @pytest.mark.parametrize("epsilon, s2", SETTINGS)
    def test_random_sequences(self, dirichlet_grid, rng, epsilon, s2):
        for _ in range(100):
            seq = interpolation.random_sequence(dirichlet_grid, 6, s2, rng)
            low = interpolation.low_band_inequality(seq, s2, epsilon)
            assert low.holds
            assert low.lhs <= low.rhs
            for convention in ("floor", "ceil"):
                high = interpolation.high_band_inequality(seq, s2, epsilon, convention)
                assert high.holds
                assert high.convention == convention

    def test_conventions_share_the_bound(self, dirichlet_grid, rng):
        seq = interpolation.random_sequence(dirichlet_grid, 8, 1.0, rng)
        floor = interpolation.high_band_inequality(seq, 1.0, 0.1, "floor")
        ceil = interpolation.high_band_inequality(seq, 1.0, 0.1, "ceil")
        assert floor.rhs == ceil.rhs
        assert floor.constant == ceil.constant

    def test_zero_sequence(self, dirichlet_grid):
        seq = interpolation.make_sequence(np.zeros((3, dirichlet_grid.n_unknowns)), dirichlet_grid, 1.0)
        low = interpolation.low_band_inequality(seq, 1.0, 0.5)
        high = interpolation.high_band_inequality(seq, 1.0, 0.5)
        assert low.lhs == 0.0 and low.ratio == 0.0
        assert high.lhs == 0.0 and high.ratio == 0.0

    def test_constant_on_the_circle(self, periodic_grid):
        alpha = np.full((1, periodic_grid.n), 1.0 / np.sqrt(periodic_grid.n))
        seq = interpolation.make_sequence(alpha, periodic_grid, 1.0)
        report = interpolation.low_band_inequality(seq, 1.0, 0.5)
        assert report.lhs == pytest.approx(1.0, rel=1e-12)
        assert report.lhs < report.rhs

    def test_everything_is_high_band_for_large_epsilon(self, periodic_grid, rng):
        # log<xi> < 5 = 2 eps / s2 on this grid, so R vanishes everywhere
        xi = 2.0 * np.pi * np.fft.fftfreq(periodic_grid.n, d=periodic_grid.h)
        assert np.all(split_index(xi, 1.0, 2.5) == 0.0)
        seq = interpolation.random_sequence(periodic_grid, 1, 1.0, rng)
        report = interpolation.high_band_inequality(seq, 1.0, 2.5)
        expected = 48.0 * 2.5**2 * seq.l2_norms[0] ** 2
        assert report.rhs == pytest.approx(expected, rel=1e-12)
        assert report.holds

    def test_unknown_convention(self, dirichlet_grid, rng):
        seq = interpolation.random_sequence(dirichlet_grid, 2, 1.0, rng)
        with pytest.raises(InvalidInputError):
            interpolation.high_band_inequality(seq, 1.0, 0.5, "round")

    def test_sequence_shape_is_checked(self, dirichlet_grid):
        with pytest.raises(InvalidInputError):
            interpolation.make_sequence(np.zeros((2, 5)), dirichlet_grid, 1.0)

    def test_sequence_from_bands(self, bands, rng):
        u = rng.standard_normal(bands.decomposition.n)
        seq = interpolation.sequence_from_bands(bands, u, 1.0)
        assert seq.K == bands.j_max
        np.testing.assert_allclose(seq.alpha.sum(axis=0), u, atol=1e-10)


class TestAssembly:
    def test_split_check(self, laplacian, rng):
        u = rng.standard_normal(laplacian.n)
        report = interpolation.split_check(u, laplacian, 1.0, 0.1)
        assert report.holds
        assert report.ratio <= 1.0

    def test_eigenvector(self, laplacian, decomposition):
        u = pinned(decomposition.eigenvectors[:, 3])
        report = interpolation.assemble_theorem(u, laplacian, 1.0, 0.1)
        assert report.split_holds
        assert report.bound_holds
        assert report.measured_C <= report.chain_C

    @pytest.mark.parametrize("weight", ["constant", "power"])
    def test_bump_family(self, dirichlet_grid, weight):
        b = 1.0 if weight == "constant" else power_weight(dirichlet_grid.nodes, 1.0) + 0.05
        op = grid_operator.build_divergence_operator(b, 1.0, dirichlet_grid)
        family = family_factory.build(FamilySpec(count=20), dirichlet_grid, 1, seed=4)
        for u in family.members[:, 0, :]:
            report = interpolation.assemble_theorem(u, op, 1.0, 0.05)
            assert report.bound_holds
            assert report.I <= report.I_bound * (1 + 1e-10)

    def test_logterm_is_the_log_norm(self, laplacian, rng):
        u = pinned(rng.standard_normal(laplacian.n))
        report = interpolation.assemble_theorem(u, laplacian, 1.0, 0.1)
        expected = estimate_lab.log_norm(u, laplacian.grid) ** 2
        assert report.logterm == pytest.approx(expected, rel=1e-12)
        assert report.norm2 == pytest.approx(u @ u)
        assert report.interpolation_epsilon == pytest.approx(np.sqrt(0.1 / (96.0 * np.e)))

    def test_measured_constant_grows_as_epsilon_shrinks(self, laplacian, rng):
        u = pinned(rng.standard_normal(laplacian.n))
        constants = [
            interpolation.assemble_theorem(u, laplacian, 1.0, eps).measured_C
            for eps in (1.0, 0.1, 0.01)
        ]
        assert constants[0] <= constants[1] <= constants[2]

    def test_band_contributions(self, laplacian, bands, rng):
        u = pinned(rng.standard_normal(laplacian.n))
        report = interpolation.assemble_theorem(u, laplacian, 1.0, 0.1)
        occupied = [j for j in bands.indices if bands.band_members(j).size > 0]
        assert [row["j"] for row in report.band_contributions] == occupied
        assert all(row["smoothing_ratio"] > 0 for row in report.band_contributions)

    def test_periodic_u_must_vanish_at_the_ends(self, periodic_laplacian, periodic_grid):
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(
                np.ones(periodic_grid.n), periodic_laplacian, 1.0, 0.1
            )

    def test_dirichlet_u_must_vanish_at_the_ends(self, laplacian, rng):
        u = pinned(rng.standard_normal(laplacian.n))
        u[0] = 1e-3
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(u, laplacian, 1.0, 0.1)

    def test_support_box(self, laplacian, dirichlet_grid):
        y = dirichlet_grid.unknowns
        u = compact_bump(y, 0.5, 0.2)
        report = interpolation.assemble_theorem(u, laplacian, 1.0, 0.1, support=(0.25, 0.75))
        assert report.bound_holds
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(u, laplacian, 1.0, 0.1, support=(0.4, 0.75))

    def test_support_box_inside_the_grid(self, laplacian, dirichlet_grid):
        u = compact_bump(dirichlet_grid.unknowns, 0.5, 0.2)
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(u, laplacian, 1.0, 0.1, support=(-0.5, 0.75))

    def test_zero_u(self, laplacian):
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(np.zeros(laplacian.n), laplacian, 1.0, 0.1)

    def test_wrong_length(self, laplacian):
        with pytest.raises(InvalidInputError):
            interpolation.assemble_theorem(np.ones(3), laplacian, 1.0, 0.1)

    def test_violation_carries_both_sides(self):
        error = InequalityViolation("band split", 2.0, 1.0)
        assert error.exit_code == 3
        assert error.details["lhs"] == 2.0


def test_small_grid_assembly():
    grid = Grid1D(34, 0.0, 1.0)
    op = grid_operator.build_divergence_operator(1.0, 1.0, grid)
    u = pinned(np.sin(np.pi * grid.unknowns))
    assert interpolation.assemble_theorem(u, op, 0.5, 0.2).bound_holds

# app/services/grid_operator.py

import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from app.core.exceptions import InvalidInputError
from app.models.operator import (
    Boundary,
    CoefficientBundleX,
    DiscreteOperator,
    Grid1D,
    ModalOperator,
    OperatorForm,
)
from app.schemas.scenario import BundleSpec, GridSpec, OperatorSpec, coefficient_value
from app.services.presets import evaluate_coefficient

logger = logging.getLogger(__name__)

Samples = Union[float, Sequence[float], np.ndarray]


def _node_samples(values: Samples, grid: Grid1D, name: str) -> np.ndarray:
    """Broadcast a scalar or check a per-node sample vector."""
    samples = np.asarray(values, dtype=float)
    if samples.ndim == 0:
        return np.full(grid.n, float(samples))
    if samples.shape != (grid.n,):
        raise InvalidInputError(
            f"{name} must have one sample per grid node ({grid.n}), got {samples.shape}"
        )
    if not np.all(np.isfinite(samples)):
        raise InvalidInputError(f"{name} has non-finite samples")
    return samples


def _flux_matrix(b: np.ndarray, grid: Grid1D) -> np.ndarray:
    """
    Matrix of -d/dy (b d/dy) on the unknowns, flux form with half-point
    coefficients b_{i+1/2} = (b_i + b_{i+1}) / 2.
    """
    h2 = grid.h**2
    if grid.boundary == Boundary.PERIODIC:
        half = 0.5 * (b + np.roll(b, -1))  # b_{i+1/2}, wraps around
        diag = (half + np.roll(half, 1)) / h2
        matrix = np.diag(diag)
        off = -half / h2
        idx = np.arange(grid.n)
        matrix[idx, (idx + 1) % grid.n] += off
        matrix[(idx + 1) % grid.n, idx] += off
        return matrix

    half = 0.5 * (b[:-1] + b[1:])  # b_{i+1/2}, i = 0..n-2
    diag = (half[:-1] + half[1:]) / h2  # interior nodes 1..n-2
    off = -half[1:-1] / h2  # couples interior i and i+1
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def _lowest_eigenvalue(matrix: np.ndarray) -> float:
    return float(eigh(matrix, eigvals_only=True, subset_by_index=[0, 0])[0])


def positivity_shift(matrix: np.ndarray) -> float:
    """Amount added to the diagonal so the spectrum starts at 1 (0 if already >= 1)."""
    return max(0.0, 1.0 - _lowest_eigenvalue(matrix))


class GridOperatorService:
    """Builds symmetric discretizations of L2 and normalizes x-coefficient bundles."""

    def build_divergence_operator(
        self,
        b: Samples,
        b0: Samples,
        grid: Grid1D,
        shift: Optional[float] = None,
    ) -> DiscreteOperator:
        """
        Discretize -d/dy(b d/dy) + b0 with second-order centered fluxes.

        `b` and `b0` are sampled on `grid.nodes`. Unless `shift` is given, the
        positivity shift is computed from the lowest eigenvalue.
        """
        b_nodes = _node_samples(b, grid, "b")
        b0_nodes = _node_samples(b0, grid, "b0")
        if np.any(b_nodes < 0):
            worst = int(np.argmin(b_nodes))
            raise InvalidInputError(
                f"Diffusion coefficient must be nonnegative, "
                f"b({grid.nodes[worst]:.6g}) = {b_nodes[worst]:.6g}",
                {"index": worst, "y": float(grid.nodes[worst]), "b": float(b_nodes[worst])},
            )

        matrix = _flux_matrix(b_nodes, grid)
        b0_unknowns = b0_nodes[1:-1] if grid.boundary == Boundary.DIRICHLET else b0_nodes
        matrix[np.diag_indices_from(matrix)] += b0_unknowns

        if shift is None:
            shift = positivity_shift(matrix)
        if shift:
            matrix[np.diag_indices_from(matrix)] += shift
        logger.debug(
            f"Divergence operator n={matrix.shape[0]} ({grid.boundary.value}), shift={shift:.6g}"
        )
        return DiscreteOperator(
            matrix=matrix, grid=grid, shift=float(shift), form=OperatorForm.DIVERGENCE_1D
        )

    def build_separable_operator(
        self,
        b_weight: Samples,
        fourier_modes: Sequence[float],
        grid: Grid1D,
        b0: Samples = 0.0,
    ) -> List[DiscreteOperator]:
        """
        One operator -d^2/dy1^2 + b_weight(y1) eta^2 (+ b0) per mode eta.

        All modes share one shift, computed on the mode with the smallest
        eta^2, so the operators differ exactly by the weighted eta^2 term.
        """
        modes = [float(eta) for eta in fourier_modes]
        if not modes:
            raise InvalidInputError("Separable operator needs at least one Fourier mode")
        weight = _node_samples(b_weight, grid, "b_weight")
        if np.any(weight < 0):
            raise InvalidInputError("Separable weight must be nonnegative")
        b0_nodes = _node_samples(b0, grid, "b0")

        base = _flux_matrix(np.ones(grid.n), grid)
        interior = slice(1, -1) if grid.boundary == Boundary.DIRICHLET else slice(None)
        weight_u = weight[interior]
        base[np.diag_indices_from(base)] += b0_nodes[interior]

        reference = int(np.argmin(np.square(modes)))
        ref_matrix = base + np.diag(weight_u * modes[reference] ** 2)
        shift = positivity_shift(ref_matrix)

        operators = []
        for eta in modes:
            matrix = base + np.diag(weight_u * eta**2 + shift)
            operators.append(
                DiscreteOperator(
                    matrix=matrix,
                    grid=grid,
                    shift=shift,
                    form=OperatorForm.SEPARABLE_2D,
                    mode=eta,
                )
            )
        logger.info(f"Separable operator: {len(modes)} modes, shift={shift:.6g}")
        return operators

    def build_modal_operator(
        self,
        b_weight: Samples,
        fourier_modes: Sequence[float],
        grid: Grid1D,
        b0: Samples = 0.0,
    ) -> ModalOperator:
        operators = self.build_separable_operator(b_weight, fourier_modes, grid, b0)
        return ModalOperator(
            operators=tuple(operators), modes=tuple(op.mode for op in operators)
        )

    def build_tensor_operator(
        self,
        b_weight: Samples,
        grid_y1: Grid1D,
        grid_y2: Grid1D,
        b0: Samples = 0.0,
    ) -> DiscreteOperator:
        """
        Full 2-D matrix of -d^2/dy1^2 - b(y1) d^2/dy2^2 (+ b0) with y2 periodic.
        Unknowns are ordered y1-major (index = i1 * n2 + i2).
        """
        if grid_y2.boundary != Boundary.PERIODIC:
            raise InvalidInputError("The y2 grid of a tensor operator must be periodic")
        weight = _node_samples(b_weight, grid_y1, "b_weight")
        b0_nodes = _node_samples(b0, grid_y1, "b0")
        interior = slice(1, -1) if grid_y1.boundary == Boundary.DIRICHLET else slice(None)

        d1 = _flux_matrix(np.ones(grid_y1.n), grid_y1)
        d1[np.diag_indices_from(d1)] += b0_nodes[interior]
        d2 = _flux_matrix(np.ones(grid_y2.n), grid_y2)
        eye2 = np.eye(grid_y2.n)
        matrix = np.kron(d1, eye2) + np.kron(np.diag(weight[interior]), d2)
        shift = positivity_shift(matrix)
        matrix[np.diag_indices_from(matrix)] += shift
        return DiscreteOperator(
            matrix=matrix,
            grid=grid_y1,
            shift=shift,
            form=OperatorForm.TENSOR_2D,
            grid_y2=grid_y2,
        )

    @staticmethod
    def periodic_symbols(grid: Grid1D) -> np.ndarray:
        """Eigenvalues (2/h^2)(1 - cos(2 pi k / n)) of the periodic -d^2/dy^2."""
        k = np.arange(grid.n)
        return (2.0 / grid.h**2) * (1.0 - np.cos(2.0 * np.pi * k / grid.n))

    def normalize_a2(self, bundle: CoefficientBundleX) -> CoefficientBundleX:
        """Divide the equation by a2 so that a2 == 1."""
        if np.any(bundle.a2 <= 0):
            worst = int(np.argmin(bundle.a2))
            raise InvalidInputError(
                f"a2 must be positive on the interval, a2({bundle.x[worst]:.6g}) = "
                f"{bundle.a2[worst]:.6g}",
                {"x": float(bundle.x[worst]), "a2": float(bundle.a2[worst])},
            )
        if bundle.is_normalized:
            return bundle
        return CoefficientBundleX(
            x=bundle.x,
            a2=np.ones_like(bundle.a2),
            a1=bundle.a1 / bundle.a2,
            a0=bundle.a0 / bundle.a2,
            g=bundle.g / bundle.a2,
            x0=bundle.x0,
        )


class CoefficientSplines:
    """Cubic-spline evaluation of a normalized bundle, with derivatives."""

    def __init__(self, bundle: CoefficientBundleX):
        if not bundle.is_normalized:
            raise InvalidInputError("Coefficient bundle must be normalized (a2 == 1)")
        self.bundle = bundle
        self.splines: Dict[str, CubicSpline] = {
            name: CubicSpline(bundle.x, getattr(bundle, name))
            for name in ("a1", "a0", "g")
        }

    def __call__(self, name: str, x, order: int = 0) -> np.ndarray:
        spline = self.splines[name]
        return spline(x, order) if order else spline(x)

    def generator_entries(self, x, lam: float, order: int = 0):
        """(a1, a0 + g * lam) or their `order`-th derivatives."""
        a1 = self(name="a1", x=x, order=order)
        a = self(name="a0", x=x, order=order) + lam * self(name="g", x=x, order=order)
        return a1, a


grid_operator = GridOperatorService()


def build_divergence_operator(b: Samples, b0: Samples, grid: Grid1D) -> DiscreteOperator:
    return grid_operator.build_divergence_operator(b, b0, grid)


def build_separable_operator(
    b_weight: Samples, fourier_modes: Sequence[float], grid: Grid1D, b0: Samples = 0.0
) -> List[DiscreteOperator]:
    return grid_operator.build_separable_operator(b_weight, fourier_modes, grid, b0)


def normalize_a2(bundle: CoefficientBundleX) -> CoefficientBundleX:
    return grid_operator.normalize_a2(bundle)


def grid_from_spec(spec: GridSpec) -> Grid1D:
    return Grid1D(spec.n, spec.ymin, spec.ymax, spec.boundary)


def build_modal_from_spec(spec: OperatorSpec, grid: Optional[Grid1D] = None) -> ModalOperator:
    """
    Operator described by a scenario. Without modes this is the 1-D operator
    -d/dy(b d/dy) + b0; with modes, b is the weight of eta^2 in the separable form.
    """
    grid = grid or grid_from_spec(spec.grid)
    b = evaluate_coefficient(coefficient_value(spec.b), grid.nodes)
    b0 = evaluate_coefficient(coefficient_value(spec.b0), grid.nodes)
    if spec.modes is None:
        return ModalOperator.single(grid_operator.build_divergence_operator(b, b0, grid))
    return grid_operator.build_modal_operator(b, spec.modes.resolve(), grid, b0)


def bundle_from_spec(spec: BundleSpec) -> CoefficientBundleX:
    """Sample a scenario's x-coefficients and normalize a2 to 1."""
    x = np.linspace(spec.x.xmin, spec.x.xmax, spec.x.n)
    bundle = CoefficientBundleX(
        x=x,
        a2=evaluate_coefficient(coefficient_value(spec.a2), x),
        a1=evaluate_coefficient(coefficient_value(spec.a1), x),
        a0=evaluate_coefficient(coefficient_value(spec.a0), x),
        g=evaluate_coefficient(coefficient_value(spec.g), x),
        x0=spec.x0,
    )
    return grid_operator.normalize_a2(bundle)

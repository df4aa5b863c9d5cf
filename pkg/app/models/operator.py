# app/models/operator.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from app.config.settings import settings
from app.core.exceptions import InvalidInputError


class Boundary(str, Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


class OperatorForm(str, Enum):
    DIVERGENCE_1D = "divergence_1d"
    SEPARABLE_2D = "separable_2d"
    TENSOR_2D = "tensor_2d"


@dataclass(frozen=True)
class Grid1D:
    """
    Uniform grid on [y_min, y_max].

    Dirichlet grids place `n` nodes on the closed interval, the two end nodes
    carry the boundary condition and the `n - 2` interior nodes are the
    unknowns. Periodic grids place `n` nodes on [y_min, y_max) and every node
    is an unknown.
    """
    n: int
    y_min: float
    y_max: float
    boundary: Boundary = Boundary.DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n < settings.MIN_GRID_POINTS:
            raise InvalidInputError(
                f"Grid needs at least {settings.MIN_GRID_POINTS} points, got {self.n}",
                {"n": self.n},
            )
        if not self.y_max > self.y_min:
            raise InvalidInputError(
                f"Empty interval [{self.y_min}, {self.y_max}]",
                {"y_min": self.y_min, "y_max": self.y_max},
            )

    @property
    def length(self) -> float:
        return self.y_max - self.y_min

    @property
    def h(self) -> float:
        if self.boundary == Boundary.DIRICHLET:
            return self.length / (self.n - 1)
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(self.n)

    @property
    def unknowns(self) -> np.ndarray:
        if self.boundary == Boundary.DIRICHLET:
            return self.nodes[1:-1]
        return self.nodes

    @property
    def n_unknowns(self) -> int:
        return self.n - 2 if self.boundary == Boundary.DIRICHLET else self.n

    def refined(self) -> "Grid1D":
        """Halve the spacing, keeping the node set of `self` as a subset."""
        n = 2 * self.n - 1 if self.boundary == Boundary.DIRICHLET else 2 * self.n
        return Grid1D(n, self.y_min, self.y_max, self.boundary)


@dataclass(frozen=True, eq=False)
class CoefficientBundleX:
    """Samples of a2, a1, a0 and g on an increasing x-grid, plus the base point x0."""
    x: np.ndarray
    a2: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    g: np.ndarray
    x0: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 4 or np.any(np.diff(x) <= 0):
            raise InvalidInputError("x-grid must be strictly increasing with >= 4 points")
        object.__setattr__(self, "x", x)
        for name in ("a2", "a1", "a0", "g"):
            values = np.broadcast_to(
                np.asarray(getattr(self, name), dtype=float), x.shape
            ).copy()
            if not np.all(np.isfinite(values)):
                raise InvalidInputError(f"Coefficient {name} has non-finite samples")
            object.__setattr__(self, name, values)
        if not x[0] <= self.x0 <= x[-1]:
            raise InvalidInputError(
                f"x0={self.x0} outside the sampled interval [{x[0]}, {x[-1]}]"
            )
        if np.interp(self.x0, x, self.a2) <= 0:
            raise InvalidInputError("a2(x0) must be positive", {"x0": self.x0})
        if np.any(self.g < 0):
            worst = int(np.argmin(self.g))
            raise InvalidInputError(
                f"g must be nonnegative, g({x[worst]})={self.g[worst]}",
                {"x": float(x[worst]), "g": float(self.g[worst])},
            )

    @property
    def is_normalized(self) -> bool:
        return bool(np.all(self.a2 == 1.0))

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """
    Symmetric matrix realization of a positive operator on the unknowns of `grid`.

    `matrix` already includes `shift` on its diagonal, so its spectrum starts
    at 1 or above; the unshifted operator is `matrix - shift * I`.
    """
    matrix: np.ndarray
    grid: Grid1D
    shift: float
    form: OperatorForm = OperatorForm.DIVERGENCE_1D
    mode: float = 0.0
    grid_y2: Optional[Grid1D] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def unshifted(self) -> np.ndarray:
        return self.matrix - self.shift * np.eye(self.n)

    def quadratic_form(self, u: np.ndarray) -> float:
        u = np.asarray(u)
        return float(np.real(np.vdot(u, self.matrix @ u)))


@dataclass(frozen=True, eq=False)
class ModalOperator:
    """
    A separable operator stored as one DiscreteOperator per Fourier mode of the
    second variable. Grid functions are mode-stacked arrays of shape
    `(n_modes, n_unknowns)`. A plain 1-D operator is the single mode 0.
    """
    operators: Tuple[DiscreteOperator, ...]
    modes: Tuple[float, ...] = field(default=(0.0,))

    def __post_init__(self):
        if len(self.operators) == 0 or len(self.operators) != len(self.modes):
            raise InvalidInputError("ModalOperator needs one operator per mode")

    @classmethod
    def single(cls, op: DiscreteOperator) -> "ModalOperator":
        return cls(operators=(op,), modes=(op.mode,))

    @property
    def grid(self) -> Grid1D:
        return self.operators[0].grid

    @property
    def n_modes(self) -> int:
        return len(self.operators)

    @property
    def shift(self) -> float:
        return self.operators[0].shift

    def as_modes(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u))
        if u.shape != (self.n_modes, self.grid.n_unknowns):
            raise InvalidInputError(
                f"Expected grid function of shape {(self.n_modes, self.grid.n_unknowns)}, "
                f"got {u.shape}"
            )
        return u

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = self.as_modes(u)
        return np.stack([op.matrix @ u[k] for k, op in enumerate(self.operators)])

    def quadratic_form(self, u: np.ndarray) -> float:
        u = self.as_modes(u)
        return float(
            sum(op.quadratic_form(u[k]) for k, op in enumerate(self.operators))
        )

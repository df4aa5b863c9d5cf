# app/schemas/scenario.py
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.estimates import FamilyKind
from app.models.operator import Boundary


class Task(str, Enum):
    SPECTRUM = "spectrum"
    BANDS = "bands"
    ODE_SWEEP = "ode_sweep"
    BUILD_SOLUTION = "build_solution"
    SUPERLOG = "superlog"
    SUBELLIPTIC = "subelliptic"
    SMOOTHING = "smoothing"
    INTERPOLATE = "interpolate"
    ASSEMBLE = "assemble"
    FULL_REPORT = "full_report"


class CoefficientTable(BaseModel):
    points: List[float]
    values: List[float]


Coefficient = Union[float, str, CoefficientTable]


def coefficient_value(spec: Coefficient) -> Union[float, str, Dict[str, Any]]:
    """Plain value accepted by `presets.evaluate_coefficient`."""
    return spec.model_dump() if isinstance(spec, CoefficientTable) else spec


class GridSpec(BaseModel):
    n: int = Field(..., ge=8)
    ymin: float = -1.0
    ymax: float = 1.0
    boundary: Boundary = Boundary.DIRICHLET

    @model_validator(mode="after")
    def check_interval(self):
        if self.ymax <= self.ymin:
            raise ValueError("grid.ymax must exceed grid.ymin")
        return self


class ModeSpec(BaseModel):
    """Fourier modes of the second variable, either listed or generated."""
    kind: Literal["list", "linear", "exp_geometric"] = "list"
    values: List[float] = Field(default_factory=list)
    start: float = 1.0
    stop: float = 1.0
    count: int = Field(1, ge=1)

    def resolve(self) -> List[float]:
        if self.kind == "list":
            if not self.values:
                raise ValueError("modes.values must not be empty")
            return [float(v) for v in self.values]
        if self.kind == "linear":
            return [float(v) for v in np.linspace(self.start, self.stop, self.count)]
        # eta = exp(t), t geometric between start and stop
        return [float(v) for v in np.exp(np.geomspace(self.start, self.stop, self.count))]


class OperatorSpec(BaseModel):
    grid: GridSpec
    b: Coefficient = "constant(1)"
    b0: Coefficient = "constant(1)"
    modes: Optional[ModeSpec] = None


class XGridSpec(BaseModel):
    n: int = Field(201, ge=4)
    xmin: float = -1.0
    xmax: float = 1.0


class BundleSpec(BaseModel):
    x: XGridSpec = Field(default_factory=XGridSpec)
    a2: Coefficient = 1.0
    a1: Coefficient = 0.0
    a0: Coefficient = 0.0
    g: Coefficient = 1.0
    x0: float = 0.0


class FamilySpec(BaseModel):
    kind: FamilyKind = FamilyKind.GAUSSIAN_BUMPS
    count: int = Field(12, ge=1)
    scales: List[int] = Field(default_factory=lambda: [2, 3, 4, 5, 6])
    seed: Optional[int] = None

    @field_validator("scales")
    @classmethod
    def positive_scales(cls, value: List[int]) -> List[int]:
        if any(m < 0 for m in value):
            raise ValueError("concentration scales must be nonnegative")
        return sorted(set(value))


class ProbeSpec(BaseModel):
    """Test function u used by the solve and assemble tasks."""
    kind: Literal["random", "gaussian", "eigenvector"] = "random"
    index: int = 0
    center: float = 0.0
    width: float = 0.1


class Parameters(BaseModel):
    epsilons: List[float] = Field(default_factory=lambda: [1.0, 0.1, 0.01])
    epsilon: float = Field(0.5, gt=0)
    s1: float = 0.75
    s2: float = Field(1.0, gt=0)
    delta: float = 0.5
    bands: Optional[List[int]] = None
    lambdas: Optional[List[float]] = None
    radius: float = Field(0.5, gt=0)
    inner_radii: List[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8])
    samples: Optional[int] = None
    sequence_count: int = Field(20, ge=1)
    sequence_bands: int = Field(5, ge=1)
    family: FamilySpec = Field(default_factory=FamilySpec)
    u: ProbeSpec = Field(default_factory=ProbeSpec)

    @field_validator("epsilons")
    @classmethod
    def positive_epsilons(cls, value: List[float]) -> List[float]:
        if not value or any(eps <= 0 for eps in value):
            raise ValueError("epsilons must be a nonempty list of positive numbers")
        return value


_NEEDS_BUNDLE = {Task.ODE_SWEEP, Task.BUILD_SOLUTION, Task.FULL_REPORT}


class Scenario(BaseModel):
    name: str
    task: Task
    seed: Optional[int] = None
    operator: OperatorSpec
    bundle_x: Optional[BundleSpec] = None
    parameters: Parameters = Field(default_factory=Parameters)
    output: Optional[str] = None

    @model_validator(mode="after")
    def check_task_inputs(self):
        if self.task in _NEEDS_BUNDLE and self.bundle_x is None:
            raise ValueError(f"task '{self.task.value}' needs a bundle_x section")
        return self

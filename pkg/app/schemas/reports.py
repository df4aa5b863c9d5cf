# app/schemas/reports.py
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.estimates import EstimateKind, Verdict


class StabilityCheck(BaseModel):
    compared_with: str
    values: List[float]
    max_relative_change: float
    stable: bool


class EstimateReport(BaseModel):
    estimate: EstimateKind
    epsilons: List[float]
    C_eps: List[float]
    worst_member: List[int]
    verdict: Verdict = Verdict.INCONCLUSIVE
    trend: Dict[int, float] = Field(default_factory=dict)
    trend_triggered: bool = False
    stability: List[StabilityCheck] = Field(default_factory=list)
    seed: Optional[int] = None
    details: Dict[str, Any] = Field(default_factory=dict)


class BandRatio(BaseModel):
    j: int
    ratio: float
    worst_member: int
    eigenvalue_count: int


class SmoothingReport(BaseModel):
    s2: float
    bands: List[BandRatio]
    epsilon_fit: float
    C_tilde: float


class MixedNormReport(BaseModel):
    s1: float
    s2: float
    lhs: float
    rhs: float
    constant: float
    continuum_constant: float
    ratio: float
    holds: bool


class ClosedGraphRow(BaseModel):
    inner_radius: float
    ratio: float
    trace_ratio: float


class ClosedGraphReport(BaseModel):
    s: float
    outer_radius: float
    rows: List[ClosedGraphRow]
    nondecreasing: bool


class InequalityReport(BaseModel):
    lhs: float
    rhs: float
    ratio: float
    constant: float
    holds: bool
    convention: str = "floor"
    details: Dict[str, Any] = Field(default_factory=dict)


class AssemblyReport(BaseModel):
    epsilon: float
    s2: float
    interpolation_epsilon: float
    I: float
    II: float
    logterm: float
    form: float
    norm2: float
    I_bound: float
    measured_C: float
    chain_C: float
    split_holds: bool
    bound_holds: bool
    band_contributions: List[Dict[str, float]] = Field(default_factory=list)

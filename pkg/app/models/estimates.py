# app/models/estimates.py
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np


class FamilyKind(str, Enum):
    GAUSSIAN_BUMPS = "gaussian_bumps"
    MODULATED_PACKETS = "modulated_packets"
    BAND_LIMITED_RANDOM = "band_limited_random"
    CONCENTRATING_SEQUENCE = "concentrating_sequence"


class EstimateKind(str, Enum):
    SUPERLOG = "superlog"
    SUBELLIPTIC = "subelliptic"
    SMOOTHING = "smoothing"
    SOBOLEV = "sobolev"


class Verdict(str, Enum):
    CONSISTENT = "consistent"
    VIOLATION_TREND = "violation_trend"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class TestFamily:
    """
    Finite set of compactly supported test functions, mode-stacked with shape
    `(count, n_modes, n_unknowns)`. `scales` holds the concentration scale m of
    each member (None for the other kinds).
    """
    __test__ = False  # not a pytest class

    kind: FamilyKind
    members: np.ndarray
    seed: int
    scales: Optional[Tuple[int, ...]] = None

    @property
    def count(self) -> int:
        return self.members.shape[0]

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.members) ** 2, axis=(1, 2)))

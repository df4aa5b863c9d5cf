# app/models/ode.py
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class GrowthCertificate:
    """
    Verified bound |z(x)| <= exp(M |x - x0|) for the scaled state z = (v, v'/mu).

    `M` is the largest 2x2 singular value of the scaled generator over the
    interval, `bracket` is <lambda> = sqrt(e^2 + lambda^2) and
    `C_x0 = M / mu` with mu = <lambda>^(1/2). `worst_ratio` is the largest
    observed |z| / exp(M |x - x0|), `worst_vdv_ratio` the largest observed
    |(v, v')| / exp(M_unscaled |x - x0|).
    """
    M: float
    C_x0: float
    bracket: float
    mu: float
    M_unscaled: float
    certified: bool
    worst_ratio: float
    worst_dv_ratio: float
    worst_vdv_ratio: float
    violations: int


@dataclass(frozen=True, eq=False)
class SpectralODESolution:
    """
    Samples of v(x, lambda) and its x-derivative on [x0 - r, x0 + r].

    The state is stored scaled: `z[0] = v * exp(-log_scale)` and
    `z[1] = v' / mu * exp(-log_scale)`. `log_scale` is zero unless the
    solution was integrated with the overflow guard.
    """
    lam: float
    x0: float
    radius: float
    x_samples: np.ndarray
    z: np.ndarray
    log_scale: np.ndarray
    mu: float
    M: float
    M_unscaled: float
    rescaled: bool
    complete: bool
    message: str = ""
    certificate: Optional[GrowthCertificate] = None

    @property
    def center_index(self) -> int:
        return (self.x_samples.size - 1) // 2

    @property
    def v(self) -> np.ndarray:
        return self.z[0] * np.exp(self.log_scale)

    @property
    def dv(self) -> np.ndarray:
        return self.z[1] * self.mu * np.exp(self.log_scale)

    @property
    def distance(self) -> np.ndarray:
        return np.abs(self.x_samples - self.x0)

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.certified


@dataclass(frozen=True, eq=False)
class DerivativeCascade:
    order: int
    x_samples: np.ndarray
    values: np.ndarray
    bound: np.ndarray
    bell_constant: int
    M_k: float
    certified: bool
    worst_ratio: float


@dataclass(frozen=True)
class SweepRow:
    lam: float
    M: float
    C_x0: float
    certified: bool
    rescaled: bool

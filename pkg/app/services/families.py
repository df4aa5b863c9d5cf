# app/services/families.py

import logging
from typing import List, Optional, Tuple

import numpy as np

from app.core.exceptions import InvalidInputError
from app.models.estimates import FamilyKind, TestFamily
from app.models.operator import Grid1D
from app.models.spectral import smooth_cutoff
from app.schemas.scenario import FamilySpec

logger = logging.getLogger(__name__)

# Gap between a member's support and the domain ends, as a fraction of the length
SUPPORT_MARGIN = 0.05


def support_window(y: np.ndarray, center: float, radius: float) -> np.ndarray:
    """Smooth window, 1 near `center` and 0 for |y - center| >= radius."""
    return smooth_cutoff(np.e * (y - center) / radius)


def compact_bump(y: np.ndarray, center: float, radius: float) -> np.ndarray:
    """exp(1 - 1 / (1 - s^2)) with s = (y - center) / radius, zero for |s| >= 1."""
    s = (np.asarray(y, dtype=float) - center) / radius
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


class FamilyFactory:
    """
    Builds test families from a FamilySpec. Members are continuous profiles
    evaluated on the grid unknowns, so the same spec and seed give the same
    functions on a refined grid.
    """

    def build(
        self,
        spec: FamilySpec,
        grid: Grid1D,
        n_modes: int = 1,
        seed: Optional[int] = None,
    ) -> TestFamily:
        seed = spec.seed if seed is None else seed
        seed = 0 if seed is None else int(seed)
        rng = np.random.default_rng(seed)
        y = grid.unknowns
        scales: Optional[Tuple[int, ...]] = None

        if spec.kind == FamilyKind.CONCENTRATING_SEQUENCE:
            profiles, modes, scale_list = self._concentrating(spec.scales, grid, n_modes)
            scales = tuple(scale_list)
        else:
            builder = {
                FamilyKind.GAUSSIAN_BUMPS: self._gaussian_bumps,
                FamilyKind.MODULATED_PACKETS: self._modulated_packets,
                FamilyKind.BAND_LIMITED_RANDOM: self._band_limited,
            }[spec.kind]
            profiles = builder(spec.count, grid, rng)
            modes = [i % n_modes for i in range(len(profiles))]

        members = np.zeros((len(profiles), n_modes, y.size))
        for i, (profile, mode) in enumerate(zip(profiles, modes)):
            members[i, mode] = profile
        family = TestFamily(kind=spec.kind, members=members, seed=seed, scales=scales)
        self.validate(family, grid)
        logger.debug(f"Family {spec.kind.value}: {family.count} members, seed={seed}")
        return family

    def enlarge(
        self, spec: FamilySpec, grid: Grid1D, n_modes: int, seed: int
    ) -> TestFamily:
        """Superset of the base family: twice as many extra members drawn with seed + 1."""
        base = self.build(spec, grid, n_modes, seed)
        if spec.kind == FamilyKind.CONCENTRATING_SEQUENCE:
            extra_spec = spec.model_copy(update={"scales": [max(spec.scales) + 1]})
        else:
            extra_spec = spec.model_copy(update={"count": 2 * spec.count})
        extra = self.build(extra_spec, grid, n_modes, seed + 1)
        scales = None
        if base.scales is not None:
            scales = base.scales + extra.scales
        return TestFamily(
            kind=spec.kind,
            members=np.concatenate([base.members, extra.members]),
            seed=seed,
            scales=scales,
        )

    @staticmethod
    def validate(family: TestFamily, grid: Grid1D) -> None:
        if family.count == 0:
            raise InvalidInputError("Test family is empty")
        norms = family.norms()
        if np.any(norms == 0):
            raise InvalidInputError(
                f"Test family member {int(np.argmin(norms))} has zero norm on this grid"
            )
        edges = np.abs(family.members[..., [0, -1]])
        if np.any(edges > 0):
            raise InvalidInputError("Test family members must vanish on the end unknowns")

    @staticmethod
    def _placement(rng: np.random.Generator, grid: Grid1D, radius: float) -> float:
        margin = radius + max(SUPPORT_MARGIN * grid.length, 2.0 * grid.h)
        lo = grid.y_min + margin
        hi = grid.y_max - margin
        if hi <= lo:
            raise InvalidInputError(f"Support radius {radius:.3g} does not fit in the domain")
        return float(lo + rng.uniform() * (hi - lo))

    def _gaussian_bumps(self, count: int, grid: Grid1D, rng) -> List[np.ndarray]:
        y = grid.unknowns
        sigmas = np.geomspace(grid.length / 60.0, grid.length / 12.0, count)
        profiles = []
        for sigma in sigmas:
            radius = 4.0 * sigma
            center = self._placement(rng, grid, radius)
            gauss = np.exp(-0.5 * ((y - center) / sigma) ** 2)
            profiles.append(gauss * support_window(y, center, radius))
        return profiles

    def _modulated_packets(self, count: int, grid: Grid1D, rng) -> List[np.ndarray]:
        y = grid.unknowns
        profiles = []
        for envelope, sigma in zip(
            self._gaussian_bumps(count, grid, rng),
            np.geomspace(grid.length / 60.0, grid.length / 12.0, count),
        ):
            omega = rng.uniform(1.0, 3.0) / sigma
            phase = rng.uniform(0.0, 2.0 * np.pi)
            profiles.append(envelope * np.cos(omega * y + phase))
        return profiles

    def _band_limited(self, count: int, grid: Grid1D, rng) -> List[np.ndarray]:
        y = grid.unknowns
        center = 0.5 * (grid.y_min + grid.y_max)
        window = support_window(y, center, 0.4 * grid.length)
        k = np.arange(1, 9)
        profiles = []
        for _ in range(count):
            amplitudes = rng.standard_normal(k.size) / k
            phases = rng.uniform(0.0, 2.0 * np.pi, k.size)
            waves = np.cos(
                2.0 * np.pi * np.outer(y - grid.y_min, k) / grid.length + phases
            )
            profiles.append(window * (waves @ amplitudes))
        return profiles

    @staticmethod
    def _concentrating(scales, grid: Grid1D, n_modes: int):
        """One bump per (scale m, mode), centered at 2^-m with radius 2^-(m+1)."""
        y = grid.unknowns
        profiles, modes, scale_list = [], [], []
        for m in scales:
            center = 2.0 ** (-m)
            radius = 2.0 ** (-m - 1)
            if center - radius <= grid.y_min or center + radius >= grid.y_max:
                raise InvalidInputError(
                    f"Concentration scale {m} does not fit in [{grid.y_min}, {grid.y_max}]"
                )
            bump = compact_bump(y, center, radius)
            for mode in range(n_modes):
                profiles.append(bump)
                modes.append(mode)
                scale_list.append(int(m))
        return profiles, modes, scale_list


family_factory = FamilyFactory()

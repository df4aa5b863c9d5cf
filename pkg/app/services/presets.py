# app/services/presets.py
"""Named coefficient presets and tabulated coefficients."""

import logging
import re
from typing import Any, Callable, Dict, Union

import numpy as np

from app.core.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

CoefficientSpec = Union[str, float, int, Dict[str, Any]]

_PRESET_PATTERN = re.compile(
    r"^\s*(?P<name>[a-z_]+)\s*(?:\(\s*(?P<arg>[-+0-9.eE]+)\s*\))?\s*$"
)


def kusuoka_weight(y: np.ndarray, kappa: float) -> np.ndarray:
    """exp(-1 / |y|^(1 - kappa)), extended by 0 at y = 0."""
    if kappa >= 1:
        raise InvalidInputError(f"Kusuoka weight needs kappa < 1, got {kappa}")
    y = np.abs(np.asarray(y, dtype=float))
    out = np.zeros_like(y)
    nonzero = y > 0
    out[nonzero] = np.exp(-1.0 / y[nonzero] ** (1.0 - kappa))
    return out


def power_weight(y: np.ndarray, p: float) -> np.ndarray:
    """|y|^(2p), the isolated-zero weight."""
    if p < 0:
        raise InvalidInputError(f"Power weight needs p >= 0, got {p}")
    return np.abs(np.asarray(y, dtype=float)) ** (2.0 * p)


def constant_weight(y: np.ndarray, value: float) -> np.ndarray:
    return np.full(np.shape(y), float(value))


PRESETS: Dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "constant": constant_weight,
    "kusuoka": kusuoka_weight,
    "power": power_weight,
}

_DEFAULT_ARGS = {"constant": 1.0, "power": 1.0}


def evaluate_coefficient(spec: CoefficientSpec, points: np.ndarray) -> np.ndarray:
    """
    Sample a coefficient on `points`.

    Accepts a number, a preset string such as "kusuoka(0.5)", or a table
    {"points": [...], "values": [...]} resampled by linear interpolation.
    """
    points = np.asarray(points, dtype=float)
    if isinstance(spec, bool):
        raise InvalidInputError(f"Invalid coefficient spec: {spec!r}")
    if isinstance(spec, (int, float)):
        return constant_weight(points, float(spec))
    if isinstance(spec, dict):
        return _evaluate_table(spec, points)
    if isinstance(spec, str):
        match = _PRESET_PATTERN.match(spec.lower())
        if not match or match.group("name") not in PRESETS:
            raise InvalidInputError(
                f"Unknown coefficient preset '{spec}'",
                {"known": sorted(PRESETS)},
            )
        name = match.group("name")
        arg = match.group("arg")
        if arg is None:
            if name not in _DEFAULT_ARGS:
                raise InvalidInputError(f"Preset '{name}' needs an argument")
            value = _DEFAULT_ARGS[name]
        else:
            value = float(arg)
        return PRESETS[name](points, value)
    raise InvalidInputError(f"Invalid coefficient spec: {spec!r}")


def _evaluate_table(spec: Dict[str, Any], points: np.ndarray) -> np.ndarray:
    try:
        xp = np.asarray(spec["points"], dtype=float)
        fp = np.asarray(spec["values"], dtype=float)
    except KeyError as exc:
        raise InvalidInputError(f"Coefficient table is missing {exc}") from exc
    if xp.ndim != 1 or xp.shape != fp.shape or xp.size < 2:
        raise InvalidInputError("Coefficient table needs matching 1-D points/values")
    if np.any(np.diff(xp) <= 0):
        raise InvalidInputError("Coefficient table points must be increasing")
    if points.min() < xp[0] or points.max() > xp[-1]:
        logger.warning(
            f"Coefficient table covers [{xp[0]}, {xp[-1]}], "
            f"extending by constants to [{points.min()}, {points.max()}]"
        )
    return np.interp(points, xp, fp)

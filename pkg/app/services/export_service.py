# app/services/export_service.py

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.config.settings import settings
from app.core.exceptions import ToolkitError
from app.schemas.scenario import Scenario

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)


def scenario_hash(scenario: Scenario) -> str:
    """sha256 of the scenario's canonical JSON."""
    return hashlib.sha256(
        canonical_json(scenario.model_dump(mode="json")).encode("utf-8")
    ).hexdigest()


def _plain(value: Any) -> Any:
    """Convert numpy and pydantic values into JSON-ready Python objects."""
    if isinstance(value, BaseModel):
        return _plain(value.model_dump(mode="json"))
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class ExportService:
    """Writes reports and tables of a scenario run into one output directory."""

    def __init__(self, out_dir: Union[str, Path], scenario: Scenario, seed: int, tol: float):
        self.out_dir = Path(out_dir)
        self.scenario = scenario
        self.seed = seed
        self.tol = tol
        self.digest = scenario_hash(scenario)
        self.written: List[Path] = []

    def _prepare(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.written.append(path)
        return path

    def envelope(self, task: str, result: Any) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.name,
            "scenario_sha256": self.digest,
            "version": settings.PROJECT_VERSION,
            "seed": self.seed,
            "task": task,
            "tolerances": {
                "ode_tol": self.tol,
                "eig_residual_tol": settings.EIG_RESIDUAL_TOL,
                "orthonormality_tol": settings.ORTHONORMALITY_TOL,
                "partition_tol": settings.PARTITION_TOL,
                "inequality_slack": settings.INEQUALITY_SLACK,
                "stability_tolerance": settings.STABILITY_TOLERANCE,
                "trend_factor": settings.TREND_FACTOR,
            },
            "result": _plain(result),
        }

    def write_report(self, name: str, task: str, result: Any) -> Path:
        path = self._prepare(name)
        text = json.dumps(self.envelope(task, result), sort_keys=True, indent=2)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path

    def write_table(self, name: str, rows: Sequence[Mapping[str, Any]]) -> Path:
        path = self._prepare(name)
        frame = pd.DataFrame([_plain(row) for row in rows])
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.info(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_matrix(self, name: str, matrix: np.ndarray, index: np.ndarray, columns: np.ndarray) -> Path:
        """Dense samples, one row per `index` value and one column per `columns` value."""
        path = self._prepare(name)
        frame = pd.DataFrame(
            np.asarray(matrix),
            index=pd.Index(np.asarray(index), name="x"),
            columns=[FLOAT_FORMAT % c for c in np.asarray(columns)],
        )
        frame.to_csv(path, float_format=FLOAT_FORMAT)
        logger.info(f"Wrote {path} ({frame.shape[0]}x{frame.shape[1]})")
        return path


def write_error(out_dir: Union[str, Path], error: ToolkitError) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    target = path / "error.json"
    target.write_text(json.dumps(_plain(error.to_dict()), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return target

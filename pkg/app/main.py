# app/main.py

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.config.settings import settings
from app.core.exceptions import ScenarioError, ToolkitError
from app.schemas.scenario import Scenario, Task
from app.services.export_service import write_error
from app.services.scenario_runner import ScenarioRunner

logging.basicConfig(level=settings.LOG_LEVEL.upper())
logger = logging.getLogger(__name__)

ESTIMATE_TASKS = (Task.SUPERLOG, Task.SUBELLIPTIC, Task.SMOOTHING)

COMMANDS = {
    "spectrum": Task.SPECTRUM,
    "bands": Task.BANDS,
    "ode": Task.ODE_SWEEP,
    "solve": Task.BUILD_SOLUTION,
    "estimate": None,  # resolved from the scenario
    "interp": Task.INTERPOLATE,
    "assemble": Task.ASSEMBLE,
    "report": Task.FULL_REPORT,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superlog",
        description=settings.PROJECT_DESCRIPTION,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, help=f"run the '{name}' pipeline of a scenario")
        sub.add_argument("--scenario", required=True, help="Path to the scenario JSON file")
        sub.add_argument("--out", default=None, help="Output directory")
        sub.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
        sub.add_argument("--tol", type=float, default=None, help="ODE tolerance (rtol = atol)")
    return parser


def load_scenario(path: str) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"Cannot read scenario {path}: {exc}") from exc
    if not text.strip():
        raise ScenarioError(f"Scenario {path} is empty")
    try:
        return Scenario.model_validate(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"Scenario {path} is not valid JSON: {exc}") from exc
    except ValidationError as exc:
        raise ScenarioError(
            f"Scenario {path} fails validation",
            {"errors": json.loads(exc.json())},
        ) from exc


def resolve_task(command: str, scenario: Scenario) -> Task:
    task = COMMANDS[command]
    if task is None:
        return scenario.task if scenario.task in ESTIMATE_TASKS else Task.SUPERLOG
    return task


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger.debug(
        f"{settings.PROJECT_NAME} {settings.PROJECT_VERSION} ({settings.ENVIRONMENT}): {args.command}"
    )
    out_dir = Path(args.out) if args.out else None
    try:
        scenario = load_scenario(args.scenario)
        if out_dir is None:
            out_dir = Path(scenario.output or settings.OUTPUT_DIR) / scenario.name
        runner = ScenarioRunner(scenario, out_dir, seed=args.seed, tol=args.tol)
        paths = runner.run(resolve_task(args.command, scenario))
    except ToolkitError as exc:
        logger.error(f"{type(exc).__name__}: {exc.message}")
        write_error(out_dir or Path(settings.OUTPUT_DIR), exc)
        return exc.exit_code
    logger.info(f"Done: {len(paths)} artifacts in {out_dir}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

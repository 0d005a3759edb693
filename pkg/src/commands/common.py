import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.config import Config
from src.models.bundle import ResultBundle
from src.models.scenario import Scenario
from src.models.trajectory import PlanResult
from src.services.ilqr_service import IlqrService
from src.services.logger import get_logger
from src.services.results_service import MANIFEST_FILE, ResultsService
from src.services.scenario_service import ScenarioService

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def global_options(suppress_defaults: bool = False) -> argparse.ArgumentParser:
    """
    Flags accepted before or after the subcommand name.

    The top-level parser carries the real defaults. Subcommand copies use
    argparse.SUPPRESS so a flag given before the subcommand is not overwritten
    by the subcommand's default.
    """
    def default(value):
        return argparse.SUPPRESS if suppress_defaults else value

    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=default(None), help="master seed for every random stream")
    parent.add_argument("--quiet", action="store_true", default=default(False), help="only log warnings and errors")
    parent.add_argument("--json", action="store_true", default=default(False), help="machine-readable output on stdout")
    parent.add_argument("--workers", type=int, default=default(Config.WORKERS), help="worker processes for Monte Carlo runs")
    parent.add_argument("--plots", action="store_true", default=default(False), help="also write PNG figures")
    parent.add_argument("--log-level", default=default(None), help="log level (default LOG_LEVEL)")
    return parent


def output(args: argparse.Namespace, payload: Dict[str, Any], text: str) -> None:
    """Print payload as JSON with --json, otherwise the human-readable text."""
    if args.json:
        sys.stdout.write(json.dumps(payload, indent=2, default=str) + "\n")
    else:
        sys.stdout.write(text + "\n")


def load_scenario(path: str, seed: Optional[int]) -> Scenario:
    """Load a scenario and apply the --seed override to its simulation seed."""
    scenario = ScenarioService.load_scenario(path)
    if seed is not None:
        scenario = scenario.model_copy(update={"simulation": scenario.simulation.model_copy(update={"seed": seed})})
    return scenario


def default_out_dir(scenario: Scenario) -> Path:
    return Config.OUTPUT_DIR / scenario.name


def plan_scenario(scenario: Scenario) -> PlanResult:
    return IlqrService.solve(scenario)


def is_bundle(path: str) -> bool:
    return (Path(path) / MANIFEST_FILE).is_file()


def resolve_source(path: str, seed: Optional[int]) -> Tuple[ResultBundle, bool]:
    """
    Bundle directory or scenario file -> (bundle, planned_now).

    A scenario file is planned in memory first; planned_now tells the caller the
    bundle still has to be written.
    """
    if is_bundle(path):
        bundle = ResultsService.load_bundle(path)
        if seed is not None:
            scenario = bundle.scenario
            bundle.scenario = scenario.model_copy(update={"simulation": scenario.simulation.model_copy(update={"seed": seed})})
            bundle.seed = seed
        return bundle, False

    scenario = load_scenario(path, seed)
    result = plan_scenario(scenario)
    if result.trajectory is None:
        raise PlanFailed(result)
    bundle = ResultBundle(
        scenario=scenario,
        trajectory=result.trajectory,
        gains=result.gains,
        report=result.report,
        seed=scenario.simulation.seed,
    )
    return bundle, True


class PlanFailed(Exception):
    """Raised inside commands when the solver returns no trajectory."""

    def __init__(self, result: PlanResult):
        self.result = result
        super().__init__(result.report.message)

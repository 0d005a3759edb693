import argparse

import numpy as np

from src.commands.common import EXIT_OK, load_scenario, output
from src.models.plant import PlantModel
from src.services.plant_service import PlantService
from src.services.scenario_service import ScenarioService


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("validate", parents=parents, help="check a scenario file and resolve its start")
    parser.add_argument("scenario", help="scenario YAML file")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    """Validation errors propagate to main, which maps them to exit code 2."""
    scenario = load_scenario(args.scenario, args.seed)
    model = PlantModel.from_scenario(scenario)
    q0 = np.asarray(scenario.initial_state.q)
    pose = PlantService.epm_pose(model, q0)
    separation = float(np.linalg.norm(np.asarray(scenario.initial_state.p_I) - pose.position))
    force_error, direction_error, _ = ScenarioService.equilibrium_errors(scenario, q0, model)

    payload = {
        "scenario": scenario.name,
        "valid": True,
        "initial_q": q0.tolist(),
        "initial_epm_position": pose.position.tolist(),
        "initial_separation": separation,
        "initial_net_force": force_error,
        "initial_direction_error": direction_error,
        "horizon": scenario.horizon.steps,
        "dt": scenario.horizon.dt,
    }
    text = "\n".join([
        f"Scenario {scenario.name} is valid",
        f"  q0 [rad]:            {', '.join(f'{v:.4f}' for v in q0)}",
        f"  EPM position [cm]:   {', '.join(f'{100 * v:.2f}' for v in pose.position)}",
        f"  separation [cm]:     {100 * separation:.2f}",
        f"  net force at start:  {force_error:.3g} N",
        f"  direction error:     {direction_error:.3g} rad",
        f"  horizon:             {scenario.horizon.steps} x {scenario.horizon.dt:g} s",
    ])
    output(args, payload, text)
    return EXIT_OK

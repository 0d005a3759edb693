import copy
from pathlib import Path

import numpy as np
import pytest

from src.models.magnet import FluidParams, MagnetSpec
from src.models.plant import PlantModel
from src.models.trajectory import GainSchedule, Trajectory
from src.services.ilqr_service import IlqrService
from src.services.kinematics_service import KinematicsService
from src.services.plant_service import PlantService
from src.services.scenario_service import ScenarioService

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# Elbow at a right angle, EPM about 0.45 m above the tank with its axis pointing down.
READY_Q = [0.0, 0.2, 0.0, -1.5707963267948966, 0.0, 1.7707963267948966, 0.785]

PANDA_LOWER = [-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973]
PANDA_UPPER = [2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973]


def _scenario_data() -> dict:
    table = KinematicsService.panda_table()
    return {
        "name": "toy",
        "dh_table": table.model_dump(mode="json"),
        "epm": {"dipole_magnitude": 51.25, "axis_in_mount_frame": [0.0, 0.0, 1.0]},
        "ipm": {"dipole_magnitude": 0.142},
        "fluid": {"drag_coefficient": 0.77, "effective_weight": -0.69e-3, "ipm_mass": 8.1e-3},
        "min_separation": 0.05,
        "workspace": {"lower": [0.415, -0.095, 0.0], "upper": [0.565, 0.055, 0.15]},
        "constraints": {
            "joint_limits": {"lower": PANDA_LOWER, "upper": PANDA_UPPER},
            "input_limits": {"lower": [-0.5] * 7, "upper": [0.5] * 7},
            "ipm_velocity_limits": {"lower": [-0.2] * 3, "upper": [0.2] * 3},
            "epm_min_position": [None, None, 0.20],
            "obstacles": [{"center": [0.49, -0.014, 0.04], "radius": 0.012, "margin": 0.003}],
        },
        "horizon": {"steps": 20, "dt": 0.02},
        "initial_state": {"p_I": [0.45, -0.02, 0.04], "v_I": [0.0, 0.0, 0.0], "q": list(READY_Q)},
        "goal": {"p_I": [0.53, -0.02, 0.04]},
        "simulation": {"position_noise_variance": 1e-2, "variance_unit": "cm2", "seed": 0},
    }


@pytest.fixture
def scenario_data():
    """Plain SI scenario tree with an explicit start configuration."""
    return copy.deepcopy(_scenario_data())


@pytest.fixture(scope="session")
def toy_scenario():
    return ScenarioService.parse_scenario(_scenario_data(), resolve_equilibrium=False)


@pytest.fixture(scope="session")
def panda_chain():
    return KinematicsService.panda_table().to_chain()


@pytest.fixture(scope="session")
def plant_model(panda_chain):
    return PlantModel(
        chain=panda_chain,
        epm=MagnetSpec(dipole_magnitude=51.25),
        ipm=MagnetSpec(dipole_magnitude=0.142),
        fluid=FluidParams(),
        min_separation=0.05,
    )


@pytest.fixture(scope="session")
def toy_plan(toy_scenario):
    """Exact rollout of a small joint motion; the capsule sinks under its own weight."""
    model = PlantModel.from_scenario(toy_scenario)
    steps = toy_scenario.horizon.steps
    inputs = np.zeros((steps, 7))
    inputs[:, 0] = 0.05
    states = PlantService.rollout(toy_scenario.initial_vector, inputs, toy_scenario.horizon.dt, model)
    return Trajectory(states=states, inputs=inputs, dt=toy_scenario.horizon.dt)


@pytest.fixture(scope="session")
def toy_gains(toy_plan):
    rng = np.random.default_rng(3)
    return GainSchedule(K=0.1 * rng.standard_normal((toy_plan.horizon, 7, 13)), d=np.zeros((toy_plan.horizon, 7)))


@pytest.fixture(scope="session")
def sim_obstacle_scenario():
    return ScenarioService.load_scenario(SCENARIO_DIR / "sim-obstacle.yaml")


@pytest.fixture(scope="session")
def sim_obstacle_result(sim_obstacle_scenario):
    """Full AL-iLQR solve of the simulated obstacle scenario; only slow tests request it."""
    return IlqrService.solve(sim_obstacle_scenario)

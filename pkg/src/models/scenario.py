from typing import Any, ClassVar, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.constraints import ConstraintSet, Vec3
from src.models.kinematics import DhTable
from src.models.magnet import FluidParams, MagnetSpec
from src.models.runtime import NoiseModel
from src.services.config_manager import ConfigManager


class _Settings(BaseModel):
    """Settings section whose defaults come from the ConfigManager section of the same name."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    section_name: ClassVar[str] = ""

    @classmethod
    def defaults(cls):
        return cls.model_validate(ConfigManager.section(cls.section_name))


class UnitsSpec(BaseModel):
    """Units used by the file; resolved scenarios are always SI (m, kg)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    length: Literal["m", "cm", "mm"] = "m"
    mass: Literal["kg", "g"] = "kg"


class WorkspaceBox(BaseModel):
    """Axis-aligned box the IPM must stay in (the tank)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: Vec3
    upper: Vec3

    @model_validator(mode="after")
    def _ordered(self) -> "WorkspaceBox":
        for axis, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo < hi:
                raise ValueError(f"axis {axis}: lower={lo} must be < upper={hi}")
        return self

    def contains(self, point: Any, pad: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.asarray(self.lower) + pad) and np.all(p <= np.asarray(self.upper) - pad))


class CostWeights(_Settings):
    """Diagonal weights of the base cost; see ConfigManager 'cost' for defaults."""

    section_name: ClassVar[str] = "cost"

    position_weight: List[float] = Field(min_length=3, max_length=3)
    velocity_weight: List[float] = Field(min_length=3, max_length=3)
    joint_weight: List[float]
    input_weight: List[float]
    terminal_position_weight: List[float] = Field(min_length=3, max_length=3)
    terminal_velocity_weight: List[float] = Field(min_length=3, max_length=3)
    terminal_joint_weight: List[float]
    manipulability_weight: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _nonnegative(self) -> "CostWeights":
        for name in (
            "position_weight", "velocity_weight", "joint_weight", "input_weight",
            "terminal_position_weight", "terminal_velocity_weight", "terminal_joint_weight",
        ):
            values = getattr(self, name)
            if any(w < 0.0 for w in values):
                raise ValueError(f"{name} entries must be >= 0")
        return self


class HorizonSpec(_Settings):
    section_name: ClassVar[str] = "horizon"

    steps: int = Field(ge=1)
    dt: float = Field(gt=0.0)


class SolverSettings(_Settings):
    section_name: ClassVar[str] = "solver"

    tol_cost: float = Field(gt=0.0)
    tol_con: float = Field(gt=0.0)
    max_inner_iterations: int = Field(ge=1)
    max_outer_iterations: int = Field(ge=1)
    regularization_init: float = Field(ge=0.0)
    regularization_min: float = Field(ge=0.0)
    regularization_max: float = Field(gt=0.0)
    regularization_increase: float = Field(gt=1.0)
    regularization_decrease: float = Field(gt=1.0)
    line_search_steps: int = Field(ge=1)
    fd_step: float = Field(gt=0.0)


class AlSettings(_Settings):
    section_name: ClassVar[str] = "al"

    penalty_init: float = Field(gt=0.0)
    penalty_scaling: float = Field(gt=1.0)
    penalty_max: float = Field(gt=0.0)
    multiplier_init: float = Field(ge=0.0)


class EstimationSettings(_Settings):
    section_name: ClassVar[str] = "estimation"

    process_model: Literal["magnetic", "constant_velocity"]
    process_noise_position: float = Field(ge=0.0)
    process_noise_velocity: float = Field(ge=0.0)
    prior_velocity_variance: float = Field(gt=0.0)
    measurement_variance_floor: float = Field(gt=0.0)


class EquilibriumSettings(_Settings):
    section_name: ClassVar[str] = "equilibrium"

    restarts: int = Field(ge=1)
    force_tolerance: float = Field(gt=0.0)
    direction_tolerance: float = Field(gt=0.0)
    seed: int = 0


class InitialState(BaseModel):
    """
    Initial IPM state and arm configuration.

    When q is omitted it is computed by ScenarioService.equilibrium_seed, starting
    from q_guess (or the middle of the joint limits).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    p_I: Vec3
    v_I: Vec3 = (0.0, 0.0, 0.0)
    q: Optional[List[float]] = None
    q_guess: Optional[List[float]] = None


class GoalSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    p_I: Vec3
    v_I: Vec3 = (0.0, 0.0, 0.0)


class Scenario(BaseModel):
    """
    Complete problem definition: arm, magnets, fluid, constraints, cost, horizon, start and goal.

    All quantities are SI once loaded through ScenarioService.load_scenario.
    Shipped scenario files tag each value as [reference] or [calibration].
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    description: str = ""
    units: UnitsSpec = Field(default_factory=UnitsSpec)
    dh_table: DhTable
    epm: MagnetSpec
    ipm: MagnetSpec
    fluid: FluidParams = Field(default_factory=FluidParams)
    min_separation: float = Field(default_factory=lambda: ConfigManager.get("plant.min_separation"), gt=0.0)
    workspace: WorkspaceBox
    constraints: ConstraintSet
    cost: CostWeights = Field(default_factory=CostWeights.defaults)
    horizon: HorizonSpec = Field(default_factory=HorizonSpec.defaults)
    initial_state: InitialState
    goal: GoalSpec
    solver: SolverSettings = Field(default_factory=SolverSettings.defaults)
    al: AlSettings = Field(default_factory=AlSettings.defaults)
    estimation: EstimationSettings = Field(default_factory=EstimationSettings.defaults)
    simulation: NoiseModel = Field(default_factory=NoiseModel.defaults)
    equilibrium: EquilibriumSettings = Field(default_factory=EquilibriumSettings.defaults)

    @model_validator(mode="after")
    def _dimensions(self) -> "Scenario":
        n = self.dh_table.joint_count
        if n != 7:
            raise ValueError(f"dh_table must have exactly 7 rows for the 13-state plant, got {n}")
        for name, values in (
            ("constraints.joint_limits", self.constraints.joint_limits.lower),
            ("cost.joint_weight", self.cost.joint_weight),
            ("cost.input_weight", self.cost.input_weight),
            ("cost.terminal_joint_weight", self.cost.terminal_joint_weight),
        ):
            if len(values) != n:
                raise ValueError(f"{name} must have {n} entries, got {len(values)}")
        for name, values in (("initial_state.q", self.initial_state.q), ("initial_state.q_guess", self.initial_state.q_guess)):
            if values is not None and len(values) != n:
                raise ValueError(f"{name} must have {n} entries, got {len(values)}")
        return self

    @property
    def initial_vector(self) -> np.ndarray:
        """13-vector x0; requires a resolved initial_state.q."""
        if self.initial_state.q is None:
            raise ValueError("initial_state.q is unresolved; run ScenarioService.equilibrium_seed first")
        return np.concatenate([self.initial_state.p_I, self.initial_state.v_I, self.initial_state.q]).astype(float)

    def with_initial_q(self, q: Any) -> "Scenario":
        """Copy with the initial joint configuration filled in."""
        initial = self.initial_state.model_copy(update={"q": [float(v) for v in np.asarray(q, dtype=float)]})
        return self.model_copy(update={"initial_state": initial})

    def to_si_dict(self) -> Dict[str, Any]:
        """Plain dict of the resolved scenario, declared in SI units."""
        data = self.model_dump(mode="json")
        data["units"] = {"length": "m", "mass": "kg"}
        return data

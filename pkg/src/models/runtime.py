from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from src.services.config_manager import ConfigManager

DoubleArray = npt.NDArray[np.float64]

_VARIANCE_SCALE_TO_SI = {"m2": 1.0, "cm2": 1e-4, "mm2": 1e-6}


class NoiseModel(BaseModel):
    """
    Disturbances injected into a simulated execution.

    Variances are given in variance_unit and converted to metres on use, so the
    reference value 1e-2 cm² is a 1 mm standard deviation.

    Attributes:
        position_noise_variance: Variance of each measured IPM position coordinate
        variance_unit: Unit of the position variances ("m2", "cm2", "mm2")
        initial_position_variance: Dispersion of the true IPM start around the plan's
            x0, same unit; None reuses position_noise_variance
        process_noise_variance: Velocity disturbance per step, (m/s)², 0 disables it
        measurement_decimation: Take a measurement every n-th control step
        seed: Master seed for every random stream of a study
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    position_noise_variance: float = Field(ge=0.0)
    variance_unit: Literal["m2", "cm2", "mm2"] = "cm2"
    initial_position_variance: Optional[float] = Field(default=None, ge=0.0)
    process_noise_variance: float = Field(default=0.0, ge=0.0)
    measurement_decimation: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)

    @classmethod
    def defaults(cls) -> "NoiseModel":
        return cls.model_validate(ConfigManager.section("simulation"))

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(position_noise_variance=0.0, initial_position_variance=0.0, seed=seed)

    @property
    def measurement_sigma(self) -> float:
        """Measurement standard deviation in metres."""
        return float(np.sqrt(self.position_noise_variance * _VARIANCE_SCALE_TO_SI[self.variance_unit]))

    @property
    def initial_sigma(self) -> float:
        """Initial-position dispersion standard deviation in metres."""
        variance = self.position_noise_variance if self.initial_position_variance is None else self.initial_position_variance
        return float(np.sqrt(variance * _VARIANCE_SCALE_TO_SI[self.variance_unit]))

    @property
    def process_sigma(self) -> float:
        return float(np.sqrt(self.process_noise_variance))


@dataclass(frozen=True)
class EkfState:
    """IPM estimate [p, v] (6,) and its covariance (6, 6)."""

    mean: DoubleArray
    covariance: DoubleArray
    fallback_used: bool = False

    @property
    def position(self) -> DoubleArray:
        return self.mean[:3]

    @property
    def velocity(self) -> DoubleArray:
        return self.mean[3:]


@dataclass(frozen=True)
class RunLog:
    """
    Everything logged during one simulated execution of a plan.

    Arrays cover the steps actually executed. A run that failed at step k holds
    k + 1 true states and k applied inputs; failure_step is None for complete runs.

    Attributes:
        mode: "open" or "closed"
        run_index: Index of the run inside its study
        seed: Master seed of the study
        times: (n + 1,) time stamps
        true_states: (n + 1, 13)
        estimates: (n + 1, 6) EKF means (open-loop runs still run the filter)
        measurements: (n + 1, 3) measured IPM positions, NaN where no measurement was taken
        measurement_noise: (n + 1, 3) noise added to the true position
        applied_inputs: (n, 7) inputs sent to the plant after clamping
    """

    mode: str
    run_index: int
    seed: int
    times: DoubleArray
    true_states: DoubleArray
    estimates: DoubleArray
    measurements: DoubleArray
    measurement_noise: DoubleArray
    applied_inputs: DoubleArray
    failure_step: Optional[int] = None
    failure_reason: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failure_step is not None

    @property
    def terminal_state(self) -> DoubleArray:
        return self.true_states[-1]


class StudySpec(BaseModel):
    """Monte Carlo study: how many runs, which loop modes, which noise variances."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    runs: int = Field(default=100, ge=1)
    modes: List[Literal["open", "closed"]] = Field(default_factory=lambda: ["open", "closed"], min_length=1)
    noise_variances: Optional[List[float]] = None
    workers: int = Field(default=1, ge=1)
    keep_logs: bool = False


@dataclass(frozen=True)
class StatisticsTable:
    """
    Terminal-state statistics in the layout of the reference experiment table.

    Values are per axis (x, y, z) in centimetres and centimetres per second.
    """

    initial_position: DoubleArray
    goal_position: DoubleArray
    mean_position: DoubleArray
    std_position: DoubleArray
    mean_velocity: DoubleArray
    std_velocity: DoubleArray

    ROW_LABELS = (
        "Initial Position [cm]",
        "Goal Position [cm]",
        "Mean Position at Final [cm]",
        "Std. Dev. Position at Final [cm]",
        "Mean Velocity at Final [cm/s]",
        "Std. Dev. Velocity at Final [cm/s]",
    )

    def rows(self) -> List[List[Any]]:
        values = (
            self.initial_position, self.goal_position, self.mean_position,
            self.std_position, self.mean_velocity, self.std_velocity,
        )
        return [[label, *(float(v) for v in vec)] for label, vec in zip(self.ROW_LABELS, values)]

    def to_dict(self) -> Dict[str, List[float]]:
        return {label: [float(v) for v in values] for label, *values in self.rows()}


@dataclass(frozen=True)
class StudySummary:
    """
    Aggregate of one (mode, noise variance) cell of a study.

    position_mean / position_std are per-timestep bands over successful runs (m).
    terminal_position_error is the mean distance of the final IPM position to the goal (m).
    """

    mode: str
    noise_variance: float
    variance_unit: str
    runs: int
    failures: int
    failed_runs: List[int]
    table: StatisticsTable
    terminal_position_error: float
    position_mean: DoubleArray
    position_std: DoubleArray
    logs: List[RunLog] = field(default_factory=list)

    @property
    def successes(self) -> int:
        return self.runs - self.failures

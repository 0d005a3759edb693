from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
import numpy.typing as npt

DoubleArray = npt.NDArray[np.float64]


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    DIVERGED = "diverged"
    INFEASIBLE_START = "infeasible_start"


@dataclass(frozen=True)
class Trajectory:
    """
    Time-indexed plan: states (N + 1, 13) and inputs (N, 7).

    states[k + 1] is exactly the plant step of (states[k], inputs[k], dt) for
    trajectories produced by the solver.
    """

    states: DoubleArray
    inputs: DoubleArray
    dt: float
    cost: float = float("nan")
    max_violation: float = float("nan")

    @property
    def horizon(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def times(self) -> DoubleArray:
        return self.dt * np.arange(self.horizon + 1)

    @property
    def initial_state(self) -> DoubleArray:
        return self.states[0]

    @property
    def terminal_state(self) -> DoubleArray:
        return self.states[-1]


@dataclass(frozen=True)
class GainSchedule:
    """Feedback matrices K (N, m, n) and feedforward terms d (N, m) of the final backward pass."""

    K: DoubleArray
    d: DoubleArray

    def __post_init__(self) -> None:
        if self.K.ndim != 3 or self.d.ndim != 2 or self.K.shape[:2] != self.d.shape:
            raise ValueError(f"inconsistent gain shapes K{self.K.shape} d{self.d.shape}")

    @property
    def horizon(self) -> int:
        return int(self.K.shape[0])

    @classmethod
    def zeros(cls, horizon: int, control_dim: int, state_dim: int) -> "GainSchedule":
        return cls(K=np.zeros((horizon, control_dim, state_dim)), d=np.zeros((horizon, control_dim)))


@dataclass(frozen=True)
class OuterIterationRecord:
    """One augmented-Lagrangian outer iteration."""

    iteration: int
    cost: float
    al_cost: float
    max_violation: float
    penalty: float
    max_multiplier: float
    inner_iterations: int
    regularization: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "cost": self.cost,
            "al_cost": self.al_cost,
            "max_violation": self.max_violation,
            "penalty": self.penalty,
            "max_multiplier": self.max_multiplier,
            "inner_iterations": self.inner_iterations,
            "regularization": self.regularization,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "OuterIterationRecord":
        return cls(**{name: data[name] for name in cls.__dataclass_fields__})


@dataclass
class SolverReport:
    """
    Solve history and outcome.

    Attributes:
        status: Final SolverStatus
        iterations: One record per outer iteration
        message: Human-readable reason for the status
        cost: Base cost of the returned trajectory
        max_violation: Largest constraint violation of the returned trajectory
        inner_cost_history: Accepted AL costs of every inner iteration, in order
    """

    status: SolverStatus
    iterations: List[OuterIterationRecord] = field(default_factory=list)
    message: str = ""
    cost: float = float("nan")
    max_violation: float = float("nan")
    inner_cost_history: List[List[float]] = field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.status in (SolverStatus.CONVERGED, SolverStatus.MAX_ITER)

    @property
    def total_inner_iterations(self) -> int:
        return sum(record.inner_iterations for record in self.iterations)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "message": self.message,
            "cost": finite_or_none(self.cost),
            "max_violation": finite_or_none(self.max_violation),
            "outer_iterations": len(self.iterations),
            "inner_iterations": self.total_inner_iterations,
            "iterations": [record.to_dict() for record in self.iterations],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SolverReport":
        return cls(
            status=SolverStatus(data["status"]),
            iterations=[OuterIterationRecord.from_dict(record) for record in data.get("iterations", [])],
            message=data.get("message", ""),
            cost=none_to_nan(data.get("cost")),
            max_violation=none_to_nan(data.get("max_violation")),
        )


def finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def none_to_nan(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)


@dataclass(frozen=True)
class PlanResult:
    """Output of a solve; trajectory and gains are None when the start was infeasible."""

    trajectory: Optional[Trajectory]
    gains: Optional[GainSchedule]
    report: SolverReport

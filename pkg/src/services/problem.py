from abc import ABC, abstractmethod
from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from src.exceptions import SeparationError
from src.models.plant import PlantModel
from src.models.scenario import Scenario
from src.services.constraint_service import ConstraintLayout, ConstraintService, CostTerms
from src.services.plant_service import P, Q, PlantService

DoubleArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]


class TrajectoryProblem(ABC):
    """
    Discrete-time optimal control problem as seen by the iLQR engine.

    Costs are batched over time: running terms take states (N, n) and inputs
    (N, m), constraint terms take all N + 1 states with the inputs padded by a
    zero row at the terminal index.
    """

    def __init__(self, x0: npt.ArrayLike, horizon: int, dt: float):
        self.x0 = np.asarray(x0, dtype=float)
        self.horizon = int(horizon)
        self.dt = float(dt)

    @property
    def state_dim(self) -> int:
        return int(self.x0.shape[0])

    @property
    @abstractmethod
    def control_dim(self) -> int: ...

    @abstractmethod
    def step(self, x: DoubleArray, u: DoubleArray) -> DoubleArray: ...

    @abstractmethod
    def dynamics_jacobians(self, xs: DoubleArray, us: DoubleArray) -> Tuple[DoubleArray, DoubleArray]: ...

    @abstractmethod
    def running_cost(self, xs: DoubleArray, us: DoubleArray) -> CostTerms: ...

    @abstractmethod
    def terminal_cost(self, x: DoubleArray) -> CostTerms: ...

    @property
    def constraint_count(self) -> int:
        return 0

    @property
    def equality_rows(self) -> BoolArray:
        return np.zeros(self.constraint_count, dtype=bool)

    def applicable_rows(self) -> BoolArray:
        return np.ones((self.horizon + 1, self.constraint_count), dtype=bool)

    def constraints(self, xs: DoubleArray, us: DoubleArray) -> DoubleArray:
        return np.zeros((xs.shape[0], 0))

    def constraint_jacobians(self, xs: DoubleArray, us: DoubleArray) -> Tuple[DoubleArray, DoubleArray]:
        return np.zeros((xs.shape[0], 0, self.state_dim)), np.zeros((xs.shape[0], 0, self.control_dim))

    def input_bounds(self) -> Optional[Tuple[DoubleArray, DoubleArray]]:
        return None

    def start_violation(self) -> Optional[str]:
        """Reason the initial state cannot be rolled out, None when it can."""
        return None

    def padded_inputs(self, us: DoubleArray) -> DoubleArray:
        return np.vstack([us, np.zeros((1, self.control_dim))])

    def base_cost(self, xs: DoubleArray, us: DoubleArray) -> float:
        running = self.running_cost(xs[:-1], us)
        return float(np.sum(running.value) + self.terminal_cost(xs[-1]).value)

    def rollout(self, us: DoubleArray, x0: Optional[DoubleArray] = None) -> DoubleArray:
        states = np.empty((us.shape[0] + 1, self.state_dim))
        states[0] = self.x0 if x0 is None else x0
        for k in range(us.shape[0]):
            states[k + 1] = self.step(states[k], us[k])
        return states


def quadratic_terms(
    xs: DoubleArray,
    us: Optional[DoubleArray],
    x_goal: DoubleArray,
    q_diag: DoubleArray,
    r_diag: DoubleArray,
) -> CostTerms:
    """(x - x_g)ᵀ Q (x - x_g) + uᵀ R u with diagonal Q, R, batched over leading dimensions."""
    batch = xs.shape[:-1]
    m = r_diag.shape[0]
    dx = xs - x_goal
    u = np.zeros(batch + (m,)) if us is None else us
    value = np.sum(q_diag * dx * dx, axis=-1) + np.sum(r_diag * u * u, axis=-1)
    return CostTerms(
        value=value,
        l_x=2.0 * q_diag * dx,
        l_u=2.0 * r_diag * u,
        l_xx=np.broadcast_to(2.0 * np.diag(q_diag), batch + (q_diag.shape[0],) * 2).copy(),
        l_uu=np.broadcast_to(2.0 * np.diag(r_diag), batch + (m, m)).copy(),
        l_ux=np.zeros(batch + (m, q_diag.shape[0])),
    )


class MagneticManipulationProblem(TrajectoryProblem):
    """
    The capsule planning problem built from a resolved Scenario.

    Goal state is [p_goal, v_goal, q0]; the running cost adds the manipulability
    penalty, whose Hessian is not modelled.
    """

    def __init__(self, scenario: Scenario, model: Optional[PlantModel] = None):
        super().__init__(scenario.initial_vector, scenario.horizon.steps, scenario.horizon.dt)
        self.scenario = scenario
        self.model = model or PlantModel.from_scenario(scenario)
        self.layout = ConstraintLayout.from_constraints(scenario.constraints)
        self.fd_step = scenario.solver.fd_step

        cost = scenario.cost
        self.x_goal = np.concatenate([scenario.goal.p_I, scenario.goal.v_I, self.x0[Q]])
        self.q_diag = np.array(cost.position_weight + cost.velocity_weight + cost.joint_weight, dtype=float)
        self.r_diag = np.array(cost.input_weight, dtype=float)
        self.qf_diag = np.array(
            cost.terminal_position_weight + cost.terminal_velocity_weight + cost.terminal_joint_weight, dtype=float
        )
        self.manipulability_weight = float(cost.manipulability_weight)

    @property
    def control_dim(self) -> int:
        return int(self.r_diag.shape[0])

    def step(self, x: DoubleArray, u: DoubleArray) -> DoubleArray:
        return PlantService.step(x, u, self.dt, self.model)

    def dynamics_jacobians(self, xs: DoubleArray, us: DoubleArray) -> Tuple[DoubleArray, DoubleArray]:
        return PlantService.linearize(xs, us, self.dt, self.model, self.fd_step)

    def running_cost(self, xs: DoubleArray, us: DoubleArray) -> CostTerms:
        terms = quadratic_terms(xs, us, self.x_goal, self.q_diag, self.r_diag)
        if self.manipulability_weight == 0.0:
            return terms
        value, gradient = ConstraintService.manipulability_penalty(
            xs[..., Q], self.model, self.manipulability_weight, self.fd_step
        )
        l_x = terms.l_x.copy()
        l_x[..., Q] += gradient
        return CostTerms(terms.value + value, l_x, terms.l_u, terms.l_xx, terms.l_uu, terms.l_ux)

    def terminal_cost(self, x: DoubleArray) -> CostTerms:
        return quadratic_terms(x, None, self.x_goal, self.qf_diag, self.r_diag)

    @property
    def constraint_count(self) -> int:
        return self.layout.size

    @property
    def equality_rows(self) -> BoolArray:
        return self.layout.equality

    def applicable_rows(self) -> BoolArray:
        return self.layout.mask(self.horizon)

    def constraints(self, xs: DoubleArray, us: DoubleArray) -> DoubleArray:
        return ConstraintService.evaluate_constraints(
            xs, self.padded_inputs(us), self.scenario.constraints, self.model, self.layout
        )

    def constraint_jacobians(self, xs: DoubleArray, us: DoubleArray) -> Tuple[DoubleArray, DoubleArray]:
        return ConstraintService.constraint_jacobians(
            xs, self.padded_inputs(us), self.scenario.constraints, self.model, self.layout, self.fd_step
        )

    def input_bounds(self) -> Tuple[DoubleArray, DoubleArray]:
        limits = self.scenario.constraints.input_limits
        return np.asarray(limits.lower, dtype=float), np.asarray(limits.upper, dtype=float)

    def start_violation(self) -> Optional[str]:
        try:
            pose = PlantService.epm_pose(self.model, self.x0[Q])
            PlantService.separation(self.model, self.x0[P], pose)
        except SeparationError as e:
            return e.message
        return None

from typing import Tuple

import numpy as np
import pytest

from src.models.plant import PlantModel
from src.models.scenario import AlSettings, SolverSettings
from src.models.trajectory import SolverStatus
from src.services.constraint_service import AlState, CostTerms
from src.services.ilqr_service import IlqrService
from src.services.lq_service import LinearQuadraticProblem, LqService
from src.services.plant_service import PlantService
from src.services.problem import TrajectoryProblem


def _exact_settings(**updates):
    values = {"regularization_init": 0.0, "tol_cost": 1e-10}
    values.update(updates)
    return SolverSettings.defaults().model_copy(update=values)


class DoubleIntegrator(TrajectoryProblem):
    """1-D point mass driven to x = 1 with an upper bound on its acceleration."""

    def __init__(self, horizon: int = 30, dt: float = 0.1, u_max: float = 0.3):
        super().__init__(np.zeros(2), horizon, dt)
        self.u_max = u_max
        self.A = np.array([[1.0, dt], [0.0, 1.0]])
        self.B = np.array([[0.5 * dt * dt], [dt]])
        self.goal = np.array([1.0, 0.0])

    @property
    def control_dim(self) -> int:
        return 1

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def dynamics_jacobians(self, xs, us) -> Tuple[np.ndarray, np.ndarray]:
        count = xs.shape[0]
        return np.tile(self.A, (count, 1, 1)), np.tile(self.B, (count, 1, 1))

    def _terms(self, xs, us, weight):
        dx = xs - self.goal
        batch = xs.shape[:-1]
        return CostTerms(
            value=weight * np.sum(dx * dx, axis=-1) + 1e-2 * np.sum(us * us, axis=-1),
            l_x=2.0 * weight * dx,
            l_u=2e-2 * us,
            l_xx=np.broadcast_to(2.0 * weight * np.eye(2), batch + (2, 2)).copy(),
            l_uu=np.broadcast_to(2e-2 * np.eye(1), batch + (1, 1)).copy(),
            l_ux=np.zeros(batch + (1, 2)),
        )

    def running_cost(self, xs, us):
        return self._terms(xs, us, 1.0)

    def terminal_cost(self, x):
        return self._terms(x, np.zeros(x.shape[:-1] + (1,)), 100.0)

    @property
    def constraint_count(self) -> int:
        return 1

    def applicable_rows(self):
        mask = np.ones((self.horizon + 1, 1), dtype=bool)
        mask[-1] = False
        return mask

    def constraints(self, xs, us):
        return self.padded_inputs(us) - self.u_max

    def constraint_jacobians(self, xs, us):
        count = xs.shape[0]
        return np.zeros((count, 1, 2)), np.ones((count, 1, 1))


class TestLinearQuadratic:
    def test_matches_riccati_recursion(self):
        problem = LqService.random_problem(seed=0, state_dim=4, control_dim=2, horizon=20)
        result = IlqrService.solve(problem, _exact_settings(), AlSettings.defaults())
        K, P = LqService.riccati_recursion(problem.A, problem.B, problem.Q, problem.R, problem.Qf, problem.horizon)

        assert result.report.status is SolverStatus.CONVERGED
        assert result.report.cost == pytest.approx(LqService.optimal_cost(P, problem.x0), rel=1e-8)
        np.testing.assert_allclose(result.gains.K, K, rtol=1e-6, atol=1e-8)

    def test_states_are_exact_rollout(self):
        problem = LqService.random_problem(seed=1, state_dim=3, control_dim=1, horizon=10)
        result = IlqrService.solve(problem, _exact_settings(), AlSettings.defaults())
        np.testing.assert_allclose(result.trajectory.states, problem.rollout(result.trajectory.inputs), rtol=0, atol=0)

    def test_full_size_problem(self):
        problem = LqService.random_problem(seed=2)
        result = IlqrService.solve(problem, _exact_settings(), AlSettings.defaults())
        _, P = LqService.riccati_recursion(problem.A, problem.B, problem.Q, problem.R, problem.Qf, problem.horizon)
        assert result.report.cost == pytest.approx(LqService.optimal_cost(P, problem.x0), rel=1e-6)
        assert result.gains.K.shape == (50, 7, 13)


class TestConstrained:
    def test_input_bound_is_enforced(self):
        problem = DoubleIntegrator()
        unconstrained = IlqrService.solve(DoubleIntegrator(u_max=1e3), _exact_settings(), AlSettings.defaults())
        assert np.max(unconstrained.trajectory.inputs) > 0.3

        result = IlqrService.solve(problem, _exact_settings(tol_cost=1e-8), AlSettings.defaults())
        assert result.report.status is SolverStatus.CONVERGED
        assert np.max(result.trajectory.inputs) <= 0.3 + 1e-3
        assert result.report.max_violation < 1e-3

    def test_outer_iterations_raise_penalty(self):
        result = IlqrService.solve(DoubleIntegrator(), _exact_settings(tol_cost=1e-8), AlSettings.defaults())
        penalties = [record.penalty for record in result.report.iterations]
        assert len(penalties) >= 2
        assert all(b > a for a, b in zip(penalties, penalties[1:]))
        assert len(result.report.inner_cost_history) == len(result.report.iterations)

    def test_outer_cap_reports_max_iter(self):
        result = IlqrService.solve(
            DoubleIntegrator(), _exact_settings(max_outer_iterations=1, tol_cost=1e-8), AlSettings.defaults()
        )
        assert result.report.status is SolverStatus.MAX_ITER
        assert result.trajectory is not None


class TestScenario:
    def test_infeasible_start(self, toy_scenario):
        pose = PlantService.epm_pose(PlantModel.from_scenario(toy_scenario), toy_scenario.initial_state.q)
        start = toy_scenario.initial_state.model_copy(update={"p_I": tuple(pose.position + [0.01, 0.0, 0.0])})
        bad = toy_scenario.model_copy(update={"initial_state": start})
        result = IlqrService.solve(bad)
        assert result.report.status is SolverStatus.INFEASIBLE_START
        assert result.trajectory is None
        assert result.gains is None

    def test_short_horizon_returns_consistent_plan(self, toy_scenario):
        scenario = toy_scenario.model_copy(update={"horizon": toy_scenario.horizon.model_copy(update={"steps": 5})})
        solver = scenario.solver.model_copy(update={"max_outer_iterations": 2, "max_inner_iterations": 3})
        result = IlqrService.solve(scenario, solver)
        traj = result.trajectory
        assert traj.states.shape == (6, 13)
        assert result.gains.K.shape == (5, 7, 13)
        lower = np.asarray(scenario.constraints.input_limits.lower)
        upper = np.asarray(scenario.constraints.input_limits.upper)
        assert np.all((traj.inputs >= lower) & (traj.inputs <= upper))


class ClippedIntegrator(DoubleIntegrator):
    """Terminal target x_N >= 0.9 that the input box of ±0.05 cannot reach."""

    def __init__(self):
        super().__init__(u_max=1e3)

    def applicable_rows(self):
        mask = np.zeros((self.horizon + 1, 1), dtype=bool)
        mask[-1] = True
        return mask

    def constraints(self, xs, us):
        return 0.9 - xs[:, :1]

    def constraint_jacobians(self, xs, us):
        count = xs.shape[0]
        return np.tile(np.array([[-1.0, 0.0]]), (count, 1, 1)), np.zeros((count, 1, 1))

    def input_bounds(self):
        return np.array([-0.05]), np.array([0.05])


def _no_constraints(problem):
    rows = problem.horizon + 1
    return AlState(np.zeros((rows, 0)), 1.0, np.zeros(0, dtype=bool), np.zeros((rows, 0), dtype=bool))


class TestIdentities:
    def test_zero_state_cost_gives_zero_feedback(self):
        base = LqService.random_problem(seed=3, state_dim=3, control_dim=2, horizon=8)
        zeros = np.zeros_like(base.Q)
        problem = LinearQuadraticProblem(base.A, base.B, zeros, base.R, zeros, base.x0, base.horizon)
        inputs = np.zeros((problem.horizon, problem.control_dim))
        states = problem.rollout(inputs)

        result = IlqrService.backward_pass(problem, states, inputs, _no_constraints(problem), 0.0, _exact_settings())
        np.testing.assert_array_equal(result.gains.K, 0.0)
        np.testing.assert_array_equal(result.gains.d, 0.0)

    def test_zero_step_reproduces_nominal(self):
        problem = LqService.random_problem(seed=4, state_dim=4, control_dim=2, horizon=12)
        inputs = np.random.default_rng(4).standard_normal((problem.horizon, problem.control_dim))
        states = problem.rollout(inputs)
        backward = IlqrService.backward_pass(problem, states, inputs, _no_constraints(problem), 0.0, _exact_settings())

        rolled_states, rolled_inputs = IlqrService.forward_pass(problem, states, inputs, backward.gains, 0.0)
        np.testing.assert_array_equal(rolled_states, states)
        np.testing.assert_array_equal(rolled_inputs, inputs)

    def test_regularization_shifts_input_hessian(self):
        problem = LqService.random_problem(seed=5, state_dim=3, control_dim=2, horizon=1)
        inputs = np.array([[0.3, -0.2]])
        states = problem.rollout(inputs)
        rho = 0.5

        result = IlqrService.backward_pass(problem, states, inputs, _no_constraints(problem), rho, _exact_settings())
        A, B, R, Qf = problem.A, problem.B, problem.R, problem.Qf
        Q_uu = 2.0 * R + 2.0 * B.T @ Qf @ B
        Q_u = 2.0 * R @ inputs[0] + 2.0 * B.T @ Qf @ (A @ problem.x0 + B @ inputs[0])
        expected = -np.linalg.solve(Q_uu + rho * np.eye(2), Q_u)

        assert result.regularization == rho
        np.testing.assert_allclose(result.gains.d[0], expected, rtol=1e-10)

    def test_inner_cost_is_monotone(self):
        result = IlqrService.solve(DoubleIntegrator(), _exact_settings(tol_cost=1e-8), AlSettings.defaults())
        assert result.report.inner_cost_history
        for history in result.report.inner_cost_history:
            assert all(b <= a for a, b in zip(history, history[1:]))


class TestFinalize:
    def test_clipping_that_breaks_constraints_is_not_converged(self):
        problem = ClippedIntegrator()
        result = IlqrService.solve(problem, _exact_settings(tol_cost=1e-8), AlSettings.defaults())

        assert result.report.iterations[-1].max_violation < 1e-3
        assert result.report.status is SolverStatus.MAX_ITER
        assert result.report.max_violation > 0.5
        assert "clipping" in result.report.message
        assert np.max(np.abs(result.trajectory.inputs)) <= 0.05


@pytest.mark.slow
def test_obstacle_scenario_converges(sim_obstacle_scenario, sim_obstacle_result):
    result = sim_obstacle_result
    assert result.report.status is SolverStatus.CONVERGED
    assert result.report.max_violation < sim_obstacle_scenario.solver.tol_con
    goal = np.asarray(sim_obstacle_scenario.goal.p_I)
    assert np.linalg.norm(result.trajectory.terminal_state[:3] - goal) < 5e-3
    assert result.trajectory.inputs.shape[1] == 7
    assert np.max(np.abs(result.trajectory.inputs[:, 6])) < 1e-6

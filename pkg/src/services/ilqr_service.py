from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.exceptions import RolloutDivergedError, SeparationError
from src.models.scenario import AlSettings, Scenario, SolverSettings
from src.models.trajectory import (
    GainSchedule,
    OuterIterationRecord,
    PlanResult,
    SolverReport,
    SolverStatus,
    Trajectory,
)
from src.services.constraint_service import AlState, ConstraintService, CostTerms
from src.services.logger import get_logger
from src.services.problem import MagneticManipulationProblem, TrajectoryProblem
from src.utils.decorators import log_duration
from src.utils.numerics import symmetrize

logger = get_logger(__name__)

DoubleArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class BackwardPassResult:
    """Gains plus the expected-decrease terms: ΔJ(α) = α Δ1 + α² Δ2."""

    gains: GainSchedule
    delta1: float
    delta2: float
    regularization: float


@dataclass(frozen=True)
class _Iterate:
    states: DoubleArray
    inputs: DoubleArray
    cost: float


class IlqrService:
    """
    Augmented-Lagrangian iLQR.

    The inner loop alternates backward passes and backtracking forward passes for
    fixed multipliers and penalty; the outer loop updates multipliers and penalty
    until every constraint row is satisfied within tol_con.

    Usage:
        >>> result = IlqrService.solve(scenario)
        >>> result.report.status
        <SolverStatus.CONVERGED: 'converged'>
        >>> result.gains.K.shape
        (300, 7, 13)
    """

    @staticmethod
    def stage_terms(problem: TrajectoryProblem, states: DoubleArray, inputs: DoubleArray, al: AlState) -> Tuple[CostTerms, CostTerms]:
        """AL-augmented running (N) and terminal cost derivatives along a trajectory."""
        g = problem.constraints(states, inputs)
        g_x, g_u = problem.constraint_jacobians(states, inputs)
        running = ConstraintService.al_cost(
            problem.running_cost(states[:-1], inputs),
            g[:-1], g_x[:-1], g_u[:-1], al.window(slice(0, -1)),
        )
        terminal = IlqrService._terminal_terms(problem, states[-1], g[-1], g_x[-1], g_u[-1], al)
        return running, terminal

    @staticmethod
    def _terminal_terms(problem: TrajectoryProblem, x: DoubleArray, g: DoubleArray, g_x: DoubleArray, g_u: DoubleArray, al: AlState) -> CostTerms:
        window = al.window(slice(al.multipliers.shape[0] - 1, None))
        terms = ConstraintService.al_cost(
            IlqrService._lift(problem.terminal_cost(x)), g[None], g_x[None], g_u[None], window
        )
        return CostTerms(*(field[0] for field in terms.as_tuple()))

    @staticmethod
    def _lift(terms: CostTerms) -> CostTerms:
        return CostTerms(*(np.asarray(field)[None] for field in terms.as_tuple()))

    @staticmethod
    def total_cost(problem: TrajectoryProblem, states: DoubleArray, inputs: DoubleArray, al: AlState) -> float:
        """Base cost plus the augmented-Lagrangian terms."""
        g = problem.constraints(states, inputs)
        return problem.base_cost(states, inputs) + ConstraintService.al_value(g, al)

    @staticmethod
    def backward_pass(
        problem: TrajectoryProblem,
        states: DoubleArray,
        inputs: DoubleArray,
        al: AlState,
        regularization: float,
        settings: SolverSettings,
    ) -> Optional[BackwardPassResult]:
        """
        Riccati-like sweep from V_N = terminal AL cost back to k = 0.

        Q_uu is shifted by rho·I before its Cholesky factorization. A failed
        factorization raises rho (x10, at least 1e-6) and restarts the sweep.

        Returns:
            BackwardPassResult, or None once rho exceeds regularization_max
        """
        f_x, f_u = problem.dynamics_jacobians(states[:-1], inputs)
        running, terminal = IlqrService.stage_terms(problem, states, inputs, al)
        rho = regularization
        while rho <= settings.regularization_max:
            result = IlqrService._sweep(f_x, f_u, running, terminal, rho)
            if result is not None:
                return result
            rho = max(rho * settings.regularization_increase, 1e-6)
            logger.debug(f"Q_uu not positive definite, regularization raised to {rho:.3g}")
        return None

    @staticmethod
    def _sweep(
        f_x: DoubleArray,
        f_u: DoubleArray,
        running: CostTerms,
        terminal: CostTerms,
        rho: float,
    ) -> Optional[BackwardPassResult]:
        horizon, n, m = f_u.shape[0], f_u.shape[1], f_u.shape[2]
        K = np.zeros((horizon, m, n))
        d = np.zeros((horizon, m))
        V_x = terminal.l_x.copy()
        V_xx = terminal.l_xx.copy()
        delta1 = 0.0
        delta2 = 0.0
        shift = rho * np.eye(m)

        for k in range(horizon - 1, -1, -1):
            A, B = f_x[k], f_u[k]
            Q_x = running.l_x[k] + A.T @ V_x
            Q_u = running.l_u[k] + B.T @ V_x
            Q_xx = running.l_xx[k] + A.T @ V_xx @ A
            Q_uu = symmetrize(running.l_uu[k] + B.T @ V_xx @ B)
            Q_ux = running.l_ux[k] + B.T @ V_xx @ A
            if not (np.all(np.isfinite(Q_uu)) and np.all(np.isfinite(Q_ux)) and np.all(np.isfinite(Q_u))):
                return None
            try:
                factor = cho_factor(Q_uu + shift, lower=True, check_finite=False)
            except LinAlgError:
                return None

            d[k] = -cho_solve(factor, Q_u, check_finite=False)
            K[k] = -cho_solve(factor, Q_ux, check_finite=False)

            V_x = Q_x + K[k].T @ Q_uu @ d[k] + K[k].T @ Q_u + Q_ux.T @ d[k]
            V_xx = symmetrize(Q_xx + K[k].T @ Q_uu @ K[k] + K[k].T @ Q_ux + Q_ux.T @ K[k])
            delta1 += float(d[k] @ Q_u)
            delta2 += float(0.5 * d[k] @ Q_uu @ d[k])

        return BackwardPassResult(GainSchedule(K=K, d=d), delta1, delta2, rho)

    @staticmethod
    def forward_pass(
        problem: TrajectoryProblem,
        states: DoubleArray,
        inputs: DoubleArray,
        gains: GainSchedule,
        alpha: float,
    ) -> Optional[Tuple[DoubleArray, DoubleArray]]:
        """
        Roll out u_k = u_k_old + alpha d_k + K_k (x_k - x_k_old) from the fixed initial state.

        Returns:
            (states, inputs), or None when the rollout produced a non-finite state or
            violated the separation floor
        """
        new_states = np.empty_like(states)
        new_inputs = np.empty_like(inputs)
        new_states[0] = states[0]
        try:
            for k in range(inputs.shape[0]):
                new_inputs[k] = inputs[k] + alpha * gains.d[k] + gains.K[k] @ (new_states[k] - states[k])
                new_states[k + 1] = problem.step(new_states[k], new_inputs[k])
                if not np.all(np.isfinite(new_states[k + 1])):
                    return None
        except SeparationError as e:
            logger.debug(f"Forward pass rejected at step {k} (alpha={alpha:.4g}): {e.message}")
            return None
        return new_states, new_inputs

    @staticmethod
    def _inner_solve(
        problem: TrajectoryProblem,
        iterate: _Iterate,
        al: AlState,
        rho: float,
        settings: SolverSettings,
    ) -> Tuple[Optional[_Iterate], float, int, List[float]]:
        """Iterate backward/forward passes; returns (iterate or None on divergence, rho, iterations, cost history)."""
        history = [iterate.cost]
        alphas = 0.5 ** np.arange(settings.line_search_steps)
        iterations = 0
        while iterations < settings.max_inner_iterations:
            iterations += 1
            backward = IlqrService.backward_pass(problem, iterate.states, iterate.inputs, al, rho, settings)
            if backward is None:
                return None, rho, iterations, history
            rho = backward.regularization

            expected = -(backward.delta1 + backward.delta2)
            if expected <= settings.tol_cost * abs(iterate.cost):
                logger.debug(f"Inner iteration {iterations}: expected decrease {expected:.3g} below tolerance")
                break

            accepted: Optional[_Iterate] = None
            for alpha in alphas:
                rolled = IlqrService.forward_pass(problem, iterate.states, iterate.inputs, backward.gains, float(alpha))
                if rolled is None:
                    continue
                cost = IlqrService.total_cost(problem, rolled[0], rolled[1], al)
                if np.isfinite(cost) and cost < iterate.cost:
                    accepted = _Iterate(rolled[0], rolled[1], cost)
                    break

            if accepted is None:
                rho = max(rho * settings.regularization_increase, 1e-6)
                logger.debug(f"Inner iteration {iterations}: line search failed, regularization {rho:.3g}")
                if rho > settings.regularization_max:
                    break
                continue

            relative = (iterate.cost - accepted.cost) / max(abs(iterate.cost), 1e-300)
            logger.debug(
                f"Inner iteration {iterations}: cost {accepted.cost:.8g} "
                f"(alpha={alpha:.4g}, rho={rho:.3g}, rel. decrease {relative:.3g})"
            )
            iterate = accepted
            history.append(iterate.cost)
            rho = max(rho / settings.regularization_decrease, settings.regularization_min)
            if relative < settings.tol_cost:
                break
        return iterate, rho, iterations, history

    @staticmethod
    @log_duration("iLQR solve")
    def solve(
        problem: Union[TrajectoryProblem, Scenario],
        solver: Optional[SolverSettings] = None,
        al_settings: Optional[AlSettings] = None,
        initial_inputs: Optional[npt.ArrayLike] = None,
    ) -> PlanResult:
        """
        Solve a constrained trajectory problem.

        Args:
            problem: A TrajectoryProblem, or a resolved Scenario (wrapped in a
                MagneticManipulationProblem and solved with its own settings)
            solver: Solver hyperparameters, default from the scenario or ConfigManager
            al_settings: Augmented-Lagrangian hyperparameters
            initial_inputs: Optional warm start (N, m), zeros otherwise

        Returns:
            PlanResult. Inputs of the returned trajectory lie inside the input box,
            its states are an exact rollout of them, and the gains come from a final
            backward pass on that trajectory.
        """
        if isinstance(problem, Scenario):
            solver = solver or problem.solver
            al_settings = al_settings or problem.al
            problem = MagneticManipulationProblem(problem)
        solver = solver or SolverSettings.defaults()
        al_settings = al_settings or AlSettings.defaults()

        reason = problem.start_violation()
        if reason is not None:
            logger.warning(f"Infeasible start: {reason}")
            return PlanResult(None, None, SolverReport(status=SolverStatus.INFEASIBLE_START, message=reason))

        inputs = (
            np.zeros((problem.horizon, problem.control_dim))
            if initial_inputs is None
            else np.array(initial_inputs, dtype=float)
        )
        try:
            states = problem.rollout(inputs)
        except (SeparationError, RolloutDivergedError) as e:
            message = f"initial rollout failed: {e}"
            logger.warning(message)
            return PlanResult(None, None, SolverReport(status=SolverStatus.DIVERGED, message=message))

        al = AlState(
            multipliers=np.where(problem.applicable_rows(), al_settings.multiplier_init, 0.0),
            penalty=al_settings.penalty_init,
            equality=problem.equality_rows,
            applicable=problem.applicable_rows(),
        )
        iterate = _Iterate(states, inputs, IlqrService.total_cost(problem, states, inputs, al))
        report = SolverReport(status=SolverStatus.MAX_ITER)
        rho = solver.regularization_init

        for outer in range(solver.max_outer_iterations):
            result, rho, inner, history = IlqrService._inner_solve(problem, iterate, al, rho, solver)
            report.inner_cost_history.append(history)
            if result is None:
                report.status = SolverStatus.DIVERGED
                report.message = f"regularization exceeded {solver.regularization_max:g} in outer iteration {outer}"
                logger.warning(report.message)
                break
            iterate = result

            g = problem.constraints(iterate.states, iterate.inputs)
            violation = ConstraintService.max_violation(g, al.equality, al.applicable)
            base = problem.base_cost(iterate.states, iterate.inputs)
            report.iterations.append(OuterIterationRecord(
                iteration=outer,
                cost=base,
                al_cost=iterate.cost,
                max_violation=violation,
                penalty=al.penalty,
                max_multiplier=al.max_multiplier,
                inner_iterations=inner,
                regularization=rho,
            ))
            logger.info(
                f"Outer iteration {outer}: cost={base:.6g} max_violation={violation:.3g} "
                f"mu={al.penalty:.3g} inner={inner} rho={rho:.3g}"
            )
            if violation < solver.tol_con:
                report.status = SolverStatus.CONVERGED
                break
            al = ConstraintService.update_multipliers(al, g, al_settings.penalty_scaling, al_settings.penalty_max)
            iterate = _Iterate(iterate.states, iterate.inputs, IlqrService.total_cost(problem, iterate.states, iterate.inputs, al))

        return IlqrService._finalize(problem, iterate, al, rho, solver, report)

    @staticmethod
    def _finalize(
        problem: TrajectoryProblem,
        iterate: _Iterate,
        al: AlState,
        rho: float,
        settings: SolverSettings,
        report: SolverReport,
    ) -> PlanResult:
        """Clip inputs into the input box, re-roll the states and recompute the gains."""
        inputs = iterate.inputs
        bounds = problem.input_bounds()
        if bounds is not None:
            inputs = np.clip(inputs, bounds[0], bounds[1])
        try:
            states = problem.rollout(inputs)
        except (SeparationError, RolloutDivergedError) as e:
            report.status = SolverStatus.DIVERGED
            report.message = f"re-rolling the clipped inputs failed: {e}"
            logger.warning(report.message)
            states, inputs = iterate.states, iterate.inputs

        backward = IlqrService.backward_pass(problem, states, inputs, al, rho, settings)
        if backward is None:
            report.status = SolverStatus.DIVERGED
            report.message = report.message or "final backward pass could not be regularized"
            gains = GainSchedule.zeros(problem.horizon, problem.control_dim, problem.state_dim)
        else:
            gains = backward.gains

        g = problem.constraints(states, inputs)
        report.cost = problem.base_cost(states, inputs)
        report.max_violation = ConstraintService.max_violation(g, al.equality, al.applicable)
        if report.status == SolverStatus.CONVERGED and not report.max_violation < settings.tol_con:
            report.status = SolverStatus.MAX_ITER
            report.message = (
                f"input clipping raised the max violation to {report.max_violation:.3g} "
                f"(tol_con {settings.tol_con:g})"
            )
            logger.warning(report.message)
        if not report.message:
            report.message = {
                SolverStatus.CONVERGED: "constraints satisfied within tolerance",
                SolverStatus.MAX_ITER: "outer iteration cap reached",
            }.get(report.status, "")
        trajectory = Trajectory(
            states=states, inputs=inputs, dt=problem.dt, cost=report.cost, max_violation=report.max_violation
        )
        logger.info(
            f"Solve finished: status={report.status.value} cost={report.cost:.6g} "
            f"max_violation={report.max_violation:.3g} outer={len(report.iterations)} inner={report.total_inner_iterations}"
        )
        return PlanResult(trajectory, gains, report)

from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.exceptions import ContractViolationError, SeparationError
from src.models.plant import PlantModel
from src.models.runtime import NoiseModel, RunLog, StatisticsTable, StudySpec, StudySummary
from src.models.scenario import Scenario
from src.models.trajectory import GainSchedule, Trajectory
from src.services.estimation_service import EstimationService
from src.services.logger import get_logger
from src.services.plant_service import P, Q, V, PlantService
from src.utils.decorators import log_duration
from src.utils.numerics import sample_std
from src.utils.seeding import Stream, stream_generator

logger = get_logger(__name__)

DoubleArray = npt.NDArray[np.float64]

CM = 100.0


class SimulationService:
    """
    Simulated execution of a plan with noisy position measurements.

    Closed-loop runs apply u = u* + K (x̂ - x*) with x̂ built from the EKF estimate
    and the encoder joint angles; open-loop runs replay u*. Both run the EKF and
    draw their noise from the same per-run streams, so a closed and an open run
    with the same (seed, run index) see identical noise sequences.

    Usage:
        >>> log = SimulationService.closed_loop_run(plan, gains, noise, scenario)
        >>> summaries = SimulationService.monte_carlo(plan, gains, scenario, StudySpec(runs=100))
    """

    @staticmethod
    def closed_loop_run(
        plan: Trajectory,
        gains: GainSchedule,
        noise: NoiseModel,
        scenario: Scenario,
        run_index: int = 0,
        model: Optional[PlantModel] = None,
    ) -> RunLog:
        return SimulationService.run(plan, gains, noise, scenario, "closed", run_index, model)

    @staticmethod
    def open_loop_run(
        plan: Trajectory,
        noise: NoiseModel,
        scenario: Scenario,
        run_index: int = 0,
        model: Optional[PlantModel] = None,
    ) -> RunLog:
        return SimulationService.run(plan, None, noise, scenario, "open", run_index, model)

    @staticmethod
    def run(
        plan: Trajectory,
        gains: Optional[GainSchedule],
        noise: NoiseModel,
        scenario: Scenario,
        mode: str,
        run_index: int = 0,
        model: Optional[PlantModel] = None,
    ) -> RunLog:
        """
        Execute one run.

        A separation violation or non-finite state in the true plant ends the
        run; the log keeps everything up to that step and records failure_step.

        Raises:
            ContractViolationError: If plan and gains disagree on the horizon or mode is unknown
        """
        if mode not in ("open", "closed"):
            raise ContractViolationError("mode", f"expected 'open' or 'closed', got {mode!r}")
        if mode == "closed" and (gains is None or gains.horizon != plan.horizon):
            raise ContractViolationError(
                "gains", f"closed loop needs gains for {plan.horizon} steps, got {None if gains is None else gains.horizon}"
            )

        model = model or PlantModel.from_scenario(scenario)
        settings = scenario.estimation
        lower = np.asarray(scenario.constraints.input_limits.lower, dtype=float)
        upper = np.asarray(scenario.constraints.input_limits.upper, dtype=float)
        dt = plan.dt
        horizon = plan.horizon

        initial_rng = stream_generator(noise.seed, run_index, Stream.INITIAL_STATE)
        measurement_rng = stream_generator(noise.seed, run_index, Stream.MEASUREMENT)
        process_rng = stream_generator(noise.seed, run_index, Stream.PROCESS)

        sigma_z = noise.measurement_sigma
        sigma_0 = noise.initial_sigma
        sigma_w = noise.process_sigma
        variance_z = max(sigma_z**2, settings.measurement_variance_floor)

        true_states = np.full((horizon + 1, plan.states.shape[1]), np.nan)
        estimates = np.full((horizon + 1, 6), np.nan)
        measurements = np.full((horizon + 1, 3), np.nan)
        measurement_noise = np.full((horizon + 1, 3), np.nan)
        applied = np.full((horizon, plan.inputs.shape[1]), np.nan)

        x = plan.states[0].copy()
        if sigma_0 > 0.0:
            x[P] = x[P] + sigma_0 * initial_rng.standard_normal(3)
        true_states[0] = x

        ekf = EstimationService.initial_state(
            plan.states[0], max(sigma_0**2, settings.measurement_variance_floor), settings.prior_velocity_variance
        )

        def measure(k: int) -> None:
            nonlocal ekf
            draw = measurement_rng.standard_normal(3)
            offset = sigma_z * draw if sigma_z > 0.0 else np.zeros(3)
            z = true_states[k, P] + offset if sigma_z > 0.0 else true_states[k, P].copy()
            measurement_noise[k] = offset
            measurements[k] = z
            ekf = EstimationService.ekf_update(ekf, z, variance_z)

        measure(0)
        estimates[0] = ekf.mean

        failure_step: Optional[int] = None
        failure_reason: Optional[str] = None
        for k in range(horizon):
            u = plan.inputs[k]
            if mode == "closed":
                x_hat = np.concatenate([ekf.mean, x[Q]])
                u = u + gains.K[k] @ (x_hat - plan.states[k])
            u = np.clip(u, lower, upper)
            applied[k] = u

            try:
                x_next = PlantService.step(x, u, dt, model)
            except SeparationError as e:
                failure_step, failure_reason = k, e.message
                break
            if sigma_w > 0.0:
                x_next[V] = x_next[V] + sigma_w * process_rng.standard_normal(3)
            if not np.all(np.isfinite(x_next)):
                failure_step, failure_reason = k, "non-finite plant state"
                break

            ekf = EstimationService.ekf_predict(ekf, x[Q], u, dt, model, settings)
            x = x_next
            true_states[k + 1] = x
            if (k + 1) % noise.measurement_decimation == 0:
                measure(k + 1)
            estimates[k + 1] = ekf.mean

        if failure_step is not None:
            logger.warning(f"{mode}-loop run {run_index} failed at step {failure_step}: {failure_reason}")
            executed = failure_step + 1
            true_states, estimates = true_states[:executed], estimates[:executed]
            measurements, measurement_noise = measurements[:executed], measurement_noise[:executed]
            applied = applied[:failure_step]
        else:
            executed = horizon + 1

        return RunLog(
            mode=mode,
            run_index=run_index,
            seed=noise.seed,
            times=dt * np.arange(executed),
            true_states=true_states,
            estimates=estimates,
            measurements=measurements,
            measurement_noise=measurement_noise,
            applied_inputs=applied,
            failure_step=failure_step,
            failure_reason=failure_reason,
        )

    @staticmethod
    def _run_batch(
        plan: Trajectory,
        gains: GainSchedule,
        noise: NoiseModel,
        scenario: Scenario,
        mode: str,
        run_indices: Sequence[int],
    ) -> List[RunLog]:
        model = PlantModel.from_scenario(scenario)
        return [
            SimulationService.run(plan, gains if mode == "closed" else None, noise, scenario, mode, i, model)
            for i in run_indices
        ]

    @staticmethod
    def run_many(
        plan: Trajectory,
        gains: GainSchedule,
        noise: NoiseModel,
        scenario: Scenario,
        mode: str,
        runs: int,
        workers: int = 1,
    ) -> List[RunLog]:
        """Runs 0..runs-1, optionally spread over worker processes; output is in run order."""
        indices = list(range(runs))
        if workers <= 1 or runs == 1:
            return SimulationService._run_batch(plan, gains, noise, scenario, mode, indices)
        chunks = [indices[i::workers] for i in range(workers) if indices[i::workers]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [
                pool.submit(SimulationService._run_batch, plan, gains, noise, scenario, mode, chunk)
                for chunk in chunks
            ]
            logs = [log for future in futures for log in future.result()]
        return sorted(logs, key=lambda log: log.run_index)

    @staticmethod
    def summarize(
        logs: Sequence[RunLog],
        plan: Trajectory,
        scenario: Scenario,
        noise: NoiseModel,
        mode: str,
        keep_logs: bool = False,
    ) -> StudySummary:
        """Terminal statistics in cm and cm/s, per-timestep position bands in m."""
        succeeded = [log for log in logs if not log.failed]
        failed = [log.run_index for log in logs if log.failed]
        goal = np.asarray(scenario.goal.p_I, dtype=float)

        if succeeded:
            finals = np.stack([log.terminal_state for log in succeeded])
            positions = np.stack([log.true_states[:, P] for log in succeeded])
            mean_p, std_p = finals[:, P].mean(axis=0), sample_std(finals[:, P])
            mean_v, std_v = finals[:, V].mean(axis=0), sample_std(finals[:, V])
            band_mean, band_std = positions.mean(axis=0), sample_std(positions)
            terminal_error = float(np.mean(np.linalg.norm(finals[:, P] - goal, axis=-1)))
        else:
            nan3 = np.full(3, np.nan)
            mean_p = std_p = mean_v = std_v = nan3
            band_mean = band_std = np.full((plan.horizon + 1, 3), np.nan)
            terminal_error = float("nan")

        table = StatisticsTable(
            initial_position=CM * plan.states[0, P],
            goal_position=CM * goal,
            mean_position=CM * mean_p,
            std_position=CM * std_p,
            mean_velocity=CM * mean_v,
            std_velocity=CM * std_v,
        )
        return StudySummary(
            mode=mode,
            noise_variance=noise.position_noise_variance,
            variance_unit=noise.variance_unit,
            runs=len(logs),
            failures=len(failed),
            failed_runs=failed,
            table=table,
            terminal_position_error=terminal_error,
            position_mean=band_mean,
            position_std=band_std,
            logs=list(logs) if keep_logs else [],
        )

    @staticmethod
    @log_duration("Monte Carlo study")
    def monte_carlo(
        plan: Trajectory,
        gains: GainSchedule,
        scenario: Scenario,
        study: StudySpec,
        noise: Optional[NoiseModel] = None,
    ) -> List[StudySummary]:
        """
        Every (noise variance, loop mode) cell of a study, each reproducible from the master seed.

        Args:
            plan: Planned trajectory
            gains: Gain schedule of the plan
            scenario: Resolved scenario
            study: Runs, modes, variance grid and workers
            noise: Base noise model, the scenario's simulation section by default
        """
        base = noise or scenario.simulation
        variances = study.noise_variances or [base.position_noise_variance]
        summaries: List[StudySummary] = []
        for variance in variances:
            cell_noise = base.model_copy(update={"position_noise_variance": float(variance)})
            for mode in study.modes:
                logs = SimulationService.run_many(plan, gains, cell_noise, scenario, mode, study.runs, study.workers)
                summary = SimulationService.summarize(logs, plan, scenario, cell_noise, mode, study.keep_logs)
                logger.info(
                    f"{mode}-loop study, variance {variance:g} {cell_noise.variance_unit}: "
                    f"{summary.successes}/{summary.runs} runs completed, "
                    f"mean terminal error {CM * summary.terminal_position_error:.3f} cm"
                )
                summaries.append(summary)
        return summaries

from dataclasses import replace

import numpy as np
import pytest

from src.exceptions import ContractViolationError
from src.models.plant import PlantModel
from src.models.runtime import NoiseModel, StudySpec
from src.models.trajectory import GainSchedule, Trajectory
from src.services.plant_service import P, PlantService
from src.services.simulation_service import SimulationService
from src.utils.seeding import Stream, stream_generator


@pytest.fixture
def noise(toy_scenario):
    return toy_scenario.simulation


class TestSingleRun:
    def test_noiseless_closed_loop_reproduces_plan(self, toy_plan, toy_gains, toy_scenario):
        log = SimulationService.closed_loop_run(toy_plan, toy_gains, NoiseModel.noiseless(), toy_scenario)
        assert not log.failed
        np.testing.assert_array_equal(log.true_states, toy_plan.states)
        np.testing.assert_array_equal(log.applied_inputs, toy_plan.inputs)

    def test_noiseless_open_loop_reproduces_plan(self, toy_plan, toy_scenario):
        log = SimulationService.open_loop_run(toy_plan, NoiseModel.noiseless(), toy_scenario)
        np.testing.assert_array_equal(log.true_states, toy_plan.states)

    def test_log_shapes(self, toy_plan, toy_gains, toy_scenario, noise):
        log = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=2)
        steps = toy_plan.horizon
        assert log.true_states.shape == (steps + 1, 13)
        assert log.estimates.shape == (steps + 1, 6)
        assert log.measurements.shape == (steps + 1, 3)
        assert log.applied_inputs.shape == (steps, 7)
        np.testing.assert_allclose(log.times, toy_plan.times)
        assert log.run_index == 2

    def test_same_seed_is_reproducible(self, toy_plan, toy_gains, toy_scenario, noise):
        a = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=1)
        b = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=1)
        np.testing.assert_array_equal(a.true_states, b.true_states)
        np.testing.assert_array_equal(a.measurements, b.measurements)

    def test_runs_draw_independent_noise(self, toy_plan, toy_gains, toy_scenario, noise):
        a = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=0)
        b = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=1)
        assert not np.array_equal(a.measurement_noise, b.measurement_noise)

    def test_open_and_closed_share_noise(self, toy_plan, toy_gains, toy_scenario, noise):
        closed = SimulationService.closed_loop_run(toy_plan, toy_gains, noise, toy_scenario, run_index=4)
        opened = SimulationService.open_loop_run(toy_plan, noise, toy_scenario, run_index=4)
        np.testing.assert_array_equal(closed.measurement_noise, opened.measurement_noise)
        np.testing.assert_array_equal(closed.true_states[0], opened.true_states[0])

    def test_measurement_noise_uses_its_stream(self, toy_plan, toy_scenario, noise):
        log = SimulationService.open_loop_run(toy_plan, noise, toy_scenario, run_index=3)
        rng = stream_generator(noise.seed, 3, Stream.MEASUREMENT)
        np.testing.assert_allclose(log.measurement_noise[0], noise.measurement_sigma * rng.standard_normal(3))
        assert noise.measurement_sigma == pytest.approx(1e-3)

    def test_inputs_are_clipped(self, toy_plan, toy_scenario, noise):
        gains = GainSchedule(K=np.full((toy_plan.horizon, 7, 13), 1e6), d=np.zeros((toy_plan.horizon, 7)))
        log = SimulationService.closed_loop_run(toy_plan, gains, noise, toy_scenario)
        assert np.all(np.abs(log.applied_inputs[~np.isnan(log.applied_inputs)]) <= 0.5)

    def test_separation_failure_truncates_the_log(self, toy_scenario):
        pose = PlantService.epm_pose(PlantModel.from_scenario(toy_scenario), toy_scenario.initial_state.q)
        x0 = toy_scenario.initial_vector
        x0[P] = pose.position + [0.02, 0.0, 0.0]
        plan = Trajectory(states=np.tile(x0, (6, 1)), inputs=np.zeros((5, 7)), dt=0.02)
        log = SimulationService.open_loop_run(plan, NoiseModel.noiseless(), toy_scenario)
        assert log.failed
        assert log.failure_step == 0
        assert log.true_states.shape == (1, 13)
        assert log.applied_inputs.shape == (0, 7)

    def test_contract_checks(self, toy_plan, toy_scenario, noise):
        with pytest.raises(ContractViolationError):
            SimulationService.run(toy_plan, None, noise, toy_scenario, "closed")
        with pytest.raises(ContractViolationError):
            SimulationService.run(toy_plan, None, noise, toy_scenario, "sideways")
        short = GainSchedule.zeros(toy_plan.horizon - 1, 7, 13)
        with pytest.raises(ContractViolationError):
            SimulationService.closed_loop_run(toy_plan, short, noise, toy_scenario)


class TestStudies:
    def test_noiseless_runs_have_no_spread(self, toy_plan, toy_gains, toy_scenario):
        noise = NoiseModel.noiseless()
        logs = SimulationService.run_many(toy_plan, toy_gains, noise, toy_scenario, "closed", runs=3)
        summary = SimulationService.summarize(logs, toy_plan, toy_scenario, noise, "closed")
        np.testing.assert_allclose(summary.table.std_position, 0.0, atol=0.0)
        np.testing.assert_allclose(summary.table.mean_position, 100.0 * toy_plan.terminal_state[:3], rtol=1e-12)
        np.testing.assert_allclose(summary.table.initial_position, 100.0 * toy_plan.states[0, :3])
        assert summary.successes == 3
        assert summary.logs == []

    def test_run_many_is_in_run_order(self, toy_plan, toy_gains, toy_scenario, noise):
        logs = SimulationService.run_many(toy_plan, toy_gains, noise, toy_scenario, "open", runs=4)
        assert [log.run_index for log in logs] == [0, 1, 2, 3]

    @pytest.mark.slow
    def test_parallel_matches_serial(self, toy_plan, toy_gains, toy_scenario, noise):
        serial = SimulationService.run_many(toy_plan, toy_gains, noise, toy_scenario, "closed", runs=4, workers=1)
        parallel = SimulationService.run_many(toy_plan, toy_gains, noise, toy_scenario, "closed", runs=4, workers=2)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.true_states, b.true_states)

    def test_monte_carlo_grid(self, toy_plan, toy_gains, toy_scenario):
        study = StudySpec(runs=3, modes=["open", "closed"], noise_variances=[1e-3, 1e-2], keep_logs=True)
        summaries = SimulationService.monte_carlo(toy_plan, toy_gains, toy_scenario, study)
        assert [(s.noise_variance, s.mode) for s in summaries] == [
            (1e-3, "open"), (1e-3, "closed"), (1e-2, "open"), (1e-2, "closed"),
        ]
        assert all(len(s.logs) == 3 for s in summaries)
        assert all(s.position_mean.shape == (toy_plan.horizon + 1, 3) for s in summaries)

    def test_summary_of_failed_runs(self, toy_plan, toy_scenario):
        noise = NoiseModel.noiseless()
        log = SimulationService.open_loop_run(toy_plan, noise, toy_scenario)
        failed = replace(log, failure_step=3, failure_reason="separation")
        summary = SimulationService.summarize([failed], toy_plan, toy_scenario, noise, "open")
        assert summary.failures == 1
        assert summary.failed_runs == [0]
        assert np.all(np.isnan(summary.table.mean_position))


@pytest.mark.slow
def test_feedback_rejects_disturbances(sim_obstacle_scenario, sim_obstacle_result):
    study = StudySpec(runs=20, modes=["open", "closed"])
    open_loop, closed_loop = SimulationService.monte_carlo(
        sim_obstacle_result.trajectory, sim_obstacle_result.gains, sim_obstacle_scenario, study
    )
    assert closed_loop.successes == 20
    assert closed_loop.terminal_position_error <= 5e-3
    assert open_loop.terminal_position_error >= 2.0 * closed_loop.terminal_position_error

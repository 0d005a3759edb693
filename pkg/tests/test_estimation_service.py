import numpy as np
import pytest

from src.exceptions import ContractViolationError
from src.models.runtime import EkfState
from src.models.scenario import EstimationSettings
from src.services.estimation_service import EstimationService
from src.services.plant_service import PlantService

from tests.conftest import READY_Q

DT = 0.02


def _settings(**updates):
    return EstimationSettings.defaults().model_copy(update=updates)


def _ekf(p=(0.45, -0.02, 0.04), v=(0.01, 0.0, 0.0), variance=1e-4):
    return EkfState(mean=np.concatenate([p, v]).astype(float), covariance=variance * np.eye(6))


class TestPredict:
    def test_constant_velocity(self, plant_model):
        settings = _settings(process_model="constant_velocity", process_noise_position=0.0, process_noise_velocity=0.0)
        ekf = EstimationService.ekf_predict(_ekf(), READY_Q, np.zeros(7), DT, plant_model, settings)
        np.testing.assert_allclose(ekf.mean, [0.45 + DT * 0.01, -0.02, 0.04, 0.01, 0.0, 0.0])
        F = np.eye(6)
        F[:3, 3:] = DT * np.eye(3)
        np.testing.assert_allclose(ekf.covariance, 1e-4 * F @ F.T)
        assert not ekf.fallback_used

    def test_magnetic_prediction_matches_plant(self, plant_model):
        settings = _settings(process_model="magnetic")
        u = np.full(7, 0.1)
        ekf = EstimationService.ekf_predict(_ekf(), READY_Q, u, DT, plant_model, settings)
        p, v = PlantService.propagate_ipm(_ekf().mean[:3], _ekf().mean[3:], np.array(READY_Q), u, DT, plant_model)
        np.testing.assert_array_equal(ekf.mean, np.concatenate([p, v]))

    def test_process_noise_is_added(self, plant_model):
        quiet = EstimationService.ekf_predict(_ekf(), READY_Q, np.zeros(7), DT, plant_model, _settings(process_noise_velocity=0.0))
        noisy = EstimationService.ekf_predict(_ekf(), READY_Q, np.zeros(7), DT, plant_model, _settings(process_noise_velocity=1e-3))
        np.testing.assert_allclose(np.diag(noisy.covariance)[3:] - np.diag(quiet.covariance)[3:], 1e-3, rtol=1e-9)

    def test_fallback_near_the_magnet(self, plant_model):
        pose = PlantService.epm_pose(plant_model, READY_Q)
        ekf = _ekf(p=pose.position + [0.01, 0.0, 0.0], v=(0.0, 0.0, 0.0))
        predicted = EstimationService.ekf_predict(ekf, READY_Q, np.zeros(7), DT, plant_model, _settings())
        assert predicted.fallback_used
        assert np.all(np.isfinite(predicted.mean))

    def test_rejects_non_positive_dt(self, plant_model):
        with pytest.raises(ContractViolationError):
            EstimationService.ekf_predict(_ekf(), READY_Q, np.zeros(7), 0.0, plant_model)


class TestUpdate:
    def test_equal_variances_split_the_difference(self):
        ekf = _ekf(p=(0.0, 0.0, 0.0), v=(0.0, 0.0, 0.0), variance=1e-4)
        updated = EstimationService.ekf_update(ekf, [0.01, 0.0, -0.01], 1e-4)
        np.testing.assert_allclose(updated.mean[:3], [0.005, 0.0, -0.005], atol=1e-15)
        np.testing.assert_allclose(updated.mean[3:], 0.0, atol=1e-15)
        np.testing.assert_allclose(np.diag(updated.covariance)[:3], 5e-5)
        np.testing.assert_allclose(np.diag(updated.covariance)[3:], 1e-4)

    def test_covariance_stays_symmetric_positive(self, plant_model):
        ekf = _ekf()
        rng = np.random.default_rng(0)
        for _ in range(25):
            ekf = EstimationService.ekf_predict(ekf, READY_Q, np.zeros(7), DT, plant_model, _settings())
            ekf = EstimationService.ekf_update(ekf, ekf.mean[:3] + 1e-3 * rng.standard_normal(3), 1e-6)
        np.testing.assert_array_equal(ekf.covariance, ekf.covariance.T)
        assert np.all(np.linalg.eigvalsh(ekf.covariance) > 0.0)

    def test_non_finite_measurement_is_ignored(self):
        ekf = _ekf()
        assert EstimationService.ekf_update(ekf, [np.nan, 0.0, 0.0], 1e-6) is ekf

    def test_rejects_non_positive_variance(self):
        with pytest.raises(ContractViolationError):
            EstimationService.ekf_update(_ekf(), [0.0, 0.0, 0.0], 0.0)


class TestFilterProperties:
    def test_jacobian_matches_finite_differences(self, plant_model):
        mean = _ekf().mean
        u = np.full(7, 0.1)
        q = np.array(READY_Q)
        F = EstimationService.transition_jacobian(mean, q, u, DT, plant_model, "magnetic")

        step = 1e-5
        expected = np.empty((6, 6))
        for j, e in enumerate(np.eye(6)):
            ahead = EstimationService.transition(mean + step * e, q, u, DT, plant_model, "magnetic")
            behind = EstimationService.transition(mean - step * e, q, u, DT, plant_model, "magnetic")
            expected[:, j] = (ahead - behind) / (2.0 * step)
        np.testing.assert_allclose(F, expected, rtol=1e-4, atol=1e-7)
        np.testing.assert_allclose(F[:3, 3:], DT * np.eye(3), atol=0.1 * DT)

    def test_velocity_settles_on_a_stationary_target(self, plant_model):
        settings = _settings(process_model="constant_velocity", process_noise_position=0.0, process_noise_velocity=1e-8)
        target = np.array([0.45, -0.02, 0.04])
        ekf = _ekf(p=target, v=(0.01, 0.0, 0.0))
        rng = np.random.default_rng(5)
        speeds = []
        for _ in range(500):
            ekf = EstimationService.ekf_predict(ekf, READY_Q, np.zeros(7), DT, plant_model, settings)
            ekf = EstimationService.ekf_update(ekf, target + 1e-3 * rng.standard_normal(3), 1e-6)
            speeds.append(np.linalg.norm(ekf.mean[3:]))
        speeds = np.array(speeds)

        early = np.sqrt(np.mean(speeds[:50] ** 2))
        late = np.sqrt(np.mean(speeds[-50:] ** 2))
        assert late < 0.5 * early
        assert np.all(np.diag(ekf.covariance)[3:] < 1e-4)

    def test_covariance_stays_positive_over_long_runs(self, plant_model):
        settings = _settings(process_model="constant_velocity")
        rng = np.random.default_rng(6)
        ekf = _ekf()
        for _ in range(10_000):
            ekf = EstimationService.ekf_predict(ekf, READY_Q, rng.uniform(-0.5, 0.5, 7), DT, plant_model, settings)
            variance = 10.0 ** rng.uniform(-8.0, -2.0)
            ekf = EstimationService.ekf_update(ekf, ekf.mean[:3] + np.sqrt(variance) * rng.standard_normal(3), variance)
            np.testing.assert_array_equal(ekf.covariance, ekf.covariance.T)
            assert np.linalg.eigvalsh(ekf.covariance).min() >= -1e-12

    def test_measurement_at_the_prediction_keeps_the_mean(self, plant_model):
        predicted = EstimationService.ekf_predict(_ekf(), READY_Q, np.full(7, 0.1), DT, plant_model, _settings())
        updated = EstimationService.ekf_update(predicted, predicted.mean[:3].copy(), 1e-6)
        np.testing.assert_array_equal(updated.mean, predicted.mean)
        assert np.trace(updated.covariance[:3, :3]) < np.trace(predicted.covariance[:3, :3])


def test_initial_state():
    x0 = np.concatenate([[0.45, -0.02, 0.04], [0.0, 0.0, 0.0], READY_Q])
    ekf = EstimationService.initial_state(x0, 1e-6, 1e-4)
    np.testing.assert_array_equal(ekf.mean, x0[:6])
    np.testing.assert_allclose(np.diag(ekf.covariance), [1e-6] * 3 + [1e-4] * 3)

from dataclasses import replace

import numpy as np
import pytest

from src.exceptions import RolloutDivergedError, SeparationError
from src.models.kinematics import EpmPose
from src.services.kinematics_service import KinematicsService
from src.services.plant_service import P, Q, V, PlantService

from tests.conftest import READY_Q

DT = 0.02


def _state(p, v=(0.0, 0.0, 0.0), q=READY_Q):
    return np.concatenate([p, v, q]).astype(float)


class TestAcceleration:
    def test_drag_only(self, plant_model):
        model = replace(plant_model, fluid=plant_model.fluid.model_copy(update={"effective_weight": 0.0})).without_magnetics()
        pose = EpmPose(position=np.zeros(3), rotation=np.eye(3))
        a = PlantService.ipm_acceleration([0.5, 0.0, 0.0], [0.1, 0.0, 0.0], pose, model)
        assert a == pytest.approx([-0.951, 0.0, 0.0], rel=1e-3, abs=1e-12)

    def test_weight_only(self, plant_model):
        model = plant_model.without_magnetics()
        pose = EpmPose(position=np.zeros(3), rotation=np.eye(3))
        a = PlantService.ipm_acceleration([0.5, 0.0, 0.0], [0.0, 0.0, 0.0], pose, model)
        assert a == pytest.approx([0.0, 0.0, -0.69e-3 / 8.1e-3], rel=1e-12)

    def test_close_approach_raises(self, plant_model):
        pose = PlantService.epm_pose(plant_model, READY_Q)
        with pytest.raises(SeparationError):
            PlantService.ipm_acceleration(pose.position + [0.01, 0.0, 0.0], np.zeros(3), pose, plant_model)


class TestStep:
    def test_joints_integrate_exactly(self, plant_model):
        x = _state([0.45, -0.02, 0.04])
        u = np.linspace(-0.3, 0.3, 7)
        x_next = PlantService.step(x, u, DT, plant_model)
        np.testing.assert_array_equal(x_next[Q], x[Q] + u * DT)

    def test_free_fall_reaches_terminal_velocity(self, plant_model):
        model = plant_model.without_magnetics()
        x = _state([0.45, -0.02, 0.04])
        states = PlantService.rollout(x, np.zeros((200, 7)), DT, model)
        terminal = -np.sqrt(0.69e-3 / 0.77)
        assert states[-1, 5] == pytest.approx(terminal, rel=1e-3)
        np.testing.assert_allclose(states[-1, [3, 4]], 0.0, atol=1e-15)

    def test_batched_step_matches_single(self, plant_model):
        rng = np.random.default_rng(0)
        xs = np.stack([_state([0.45, -0.02, 0.04] + 0.01 * rng.standard_normal(3)) for _ in range(4)])
        us = 0.1 * rng.standard_normal((4, 7))
        batched = PlantService.step(xs, us, DT, plant_model)
        for k in range(4):
            np.testing.assert_allclose(batched[k], PlantService.step(xs[k], us[k], DT, plant_model), rtol=0, atol=1e-13)

    def test_separation_error_reports_stage(self, plant_model):
        pose = PlantService.epm_pose(plant_model, READY_Q)
        x = _state(pose.position + [0.02, 0.0, 0.0])
        with pytest.raises(SeparationError) as exc:
            PlantService.step(x, np.zeros(7), DT, plant_model)
        assert exc.value.stage == 0

    def test_rollout_flags_non_finite_state(self, plant_model):
        model = plant_model.without_magnetics()
        inputs = np.zeros((5, 7))
        inputs[2, 0] = np.nan
        with pytest.raises(RolloutDivergedError) as exc:
            PlantService.rollout(_state([0.45, -0.02, 0.04]), inputs, DT, model)
        assert exc.value.details["step"] == 2


class TestLinearize:
    def test_joint_rows_are_exact(self, plant_model):
        x = _state([0.45, -0.02, 0.04], v=[0.01, 0.0, -0.01])
        f_x, f_u = PlantService.linearize(x, np.zeros(7), DT, plant_model)
        np.testing.assert_array_equal(f_x[Q, Q], np.eye(7))
        np.testing.assert_array_equal(f_x[Q, :6], 0.0)
        np.testing.assert_array_equal(f_u[Q, :], DT * np.eye(7))

    def test_ipm_rows_match_step_differences(self, plant_model):
        x = _state([0.45, -0.02, 0.04], v=[0.01, 0.005, -0.01])
        u = np.full(7, 0.1)
        f_x, f_u = PlantService.linearize(x, u, DT, plant_model)
        h = 1e-5
        for j in range(13):
            e = np.zeros(13)
            e[j] = h
            column = (PlantService.step(x + e, u, DT, plant_model) - PlantService.step(x - e, u, DT, plant_model)) / (2 * h)
            np.testing.assert_allclose(f_x[:6, j], column[:6], rtol=1e-4, atol=1e-8)
        for j in range(7):
            e = np.zeros(7)
            e[j] = h
            column = (PlantService.step(x, u + e, DT, plant_model) - PlantService.step(x, u - e, DT, plant_model)) / (2 * h)
            np.testing.assert_allclose(f_u[:6, j], column[:6], rtol=1e-4, atol=1e-8)

    def test_position_depends_on_velocity(self, plant_model):
        x = _state([0.45, -0.02, 0.04])
        f_x, _ = PlantService.linearize(x, np.zeros(7), DT, plant_model)
        np.testing.assert_allclose(f_x[P, V], DT * np.eye(3), rtol=1e-3, atol=1e-6)

    def test_trajectory_batch(self, plant_model):
        model = plant_model.without_magnetics()
        states = PlantService.rollout(_state([0.45, -0.02, 0.04]), np.zeros((6, 7)), DT, model)
        f_x, f_u = PlantService.linearize(states[:-1], np.zeros((6, 7)), DT, model)
        assert f_x.shape == (6, 13, 13)
        assert f_u.shape == (6, 13, 7)
        # No magnetic coupling: the capsule rows ignore the joints.
        np.testing.assert_allclose(f_x[:, :6, Q], 0.0, atol=1e-12)


def test_epm_pose_shares_kinematics(plant_model, panda_chain):
    pose = PlantService.epm_pose(plant_model, READY_Q)
    reference = KinematicsService.forward_kinematics(panda_chain, READY_Q)
    np.testing.assert_array_equal(pose.position, reference.position)


class TestInvariants:
    def test_rk4_global_error_is_fourth_order(self, plant_model):
        x0 = _state([0.45, -0.02, 0.04], v=[0.05, 0.03, -0.02])
        horizon = 0.2

        def integrate(h):
            x = x0
            for _ in range(int(round(horizon / h))):
                x = PlantService.step(x, np.zeros(7), h, plant_model)
            return x[:6]

        reference = integrate(0.02 / 64)
        coarse = np.linalg.norm(integrate(0.02) - reference)
        fine = np.linalg.norm(integrate(0.01) - reference)
        assert 3.5 < np.log2(coarse / fine) < 4.5

    def test_drag_dissipates_energy_without_magnetics(self, plant_model):
        model = plant_model.without_magnetics()
        states = PlantService.rollout(_state([0.45, -0.02, 0.04], v=[0.1, -0.05, 0.0]), np.zeros((100, 7)), DT, model)
        mass = model.fluid.ipm_mass
        energy = 0.5 * mass * np.sum(states[:, V] ** 2, axis=1) - model.fluid.effective_weight * states[:, 2]
        assert np.all(np.diff(energy) < 0.0)

    def test_joint7_rotation_leaves_acceleration_unchanged(self, plant_model):
        p, v = np.array([0.5, -0.02, 0.04]), np.array([0.01, 0.0, 0.0])
        q = np.array(READY_Q)
        turned = q.copy()
        turned[6] += 1.3
        a = PlantService.ipm_acceleration(p, v, PlantService.epm_pose(plant_model, q), plant_model)
        b = PlantService.ipm_acceleration(p, v, PlantService.epm_pose(plant_model, turned), plant_model)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-15)

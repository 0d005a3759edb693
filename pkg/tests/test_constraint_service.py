import numpy as np
import pytest

from src.exceptions import ContractViolationError
from src.models.constraints import BoxLimits, ConstraintSet, Obstacle
from src.models.plant import PlantModel
from src.services.constraint_service import AlState, ConstraintLayout, ConstraintService, CostTerms
from src.services.kinematics_service import KinematicsService
from src.services.plant_service import PlantService

from tests.conftest import PANDA_LOWER, PANDA_UPPER, READY_Q


def _constraint_set(**overrides):
    fields = dict(
        joint_limits=BoxLimits(lower=PANDA_LOWER, upper=PANDA_UPPER),
        input_limits=BoxLimits(lower=[-0.5] * 7, upper=[0.5] * 7),
        ipm_velocity_limits=BoxLimits(lower=[-0.2] * 3, upper=[0.2] * 3),
        epm_min_position=(None, None, 0.2),
        obstacles=[Obstacle(center=(0.49, -0.014, 0.04), radius=0.012, margin=0.003)],
        orientation_target=(0.0, 1.0, 0.0),
    )
    fields.update(overrides)
    return ConstraintSet(**fields)


def _al(g, multipliers=None, penalty=10.0, equality=None, applicable=None):
    g = np.asarray(g, dtype=float)
    return AlState(
        multipliers=np.zeros_like(g) if multipliers is None else np.asarray(multipliers, dtype=float),
        penalty=penalty,
        equality=np.zeros(g.shape[-1], dtype=bool) if equality is None else np.asarray(equality),
        applicable=np.ones(g.shape, dtype=bool) if applicable is None else np.asarray(applicable),
    )


def _state(p, v=(0.0, 0.0, 0.0), q=READY_Q):
    return np.concatenate([p, v, q]).astype(float)


class TestLayout:
    def test_block_order_and_sizes(self):
        layout = ConstraintLayout.from_constraints(_constraint_set())
        assert layout.size == 7 * 4 + 3 * 2 + 1 + 1 + 3
        assert layout.blocks["joint_lower"] == slice(0, 7)
        assert layout.blocks["velocity_upper"] == slice(31, 34)
        assert layout.blocks["epm_floor"] == slice(34, 35)
        assert layout.blocks["obstacles"] == slice(35, 36)
        assert layout.blocks["orientation"] == slice(36, 39)
        assert layout.epm_axes == (2,)

    def test_only_orientation_rows_are_equalities(self):
        layout = ConstraintLayout.from_constraints(_constraint_set())
        assert np.flatnonzero(layout.equality).tolist() == [36, 37, 38]

    def test_terminal_step_has_no_input_rows(self):
        layout = ConstraintLayout.from_constraints(_constraint_set())
        mask = layout.mask(5)
        assert mask.shape == (6, layout.size)
        assert mask[:5].all()
        assert not mask[5, 14:28].any()
        assert mask[5, :14].all()

    def test_orientation_terminal_only(self):
        layout = ConstraintLayout.from_constraints(_constraint_set(orientation_every_timestep=False))
        mask = layout.mask(3)
        assert not mask[:3, 36:].any()
        assert mask[3, 36:].all()

    def test_row_names(self):
        names = ConstraintLayout.from_constraints(_constraint_set()).row_names()
        assert names[0] == "joint_lower[0]"
        assert names[-1] == "orientation[2]"


class TestEvaluate:
    def test_box_rows(self, plant_model):
        cs = _constraint_set(obstacles=[], orientation_target=None, epm_min_position=(None, None, None))
        q = np.array(READY_Q)
        q[0] = PANDA_LOWER[0]
        x = _state([0.45, -0.02, 0.04], v=[0.3, 0.0, 0.0], q=q)
        u = np.full(7, 0.5)
        g = ConstraintService.evaluate_constraints(x, u, cs, plant_model)
        assert g.shape == (34,)
        assert g[0] == pytest.approx(0.0)
        assert g[21:28] == pytest.approx(np.zeros(7))
        assert g[31] == pytest.approx(0.1)

    def test_obstacle_row_is_negative_clearance(self, plant_model):
        cs = _constraint_set(orientation_target=None)
        layout = ConstraintLayout.from_constraints(cs)
        x = _state([0.49 + 0.025, -0.014, 0.04])
        g = ConstraintService.evaluate_constraints(x, np.zeros(7), cs, plant_model, layout)
        assert g[layout.blocks["obstacles"]][0] == pytest.approx(-0.01)

    def test_epm_floor_row(self, plant_model):
        cs = _constraint_set(obstacles=[], orientation_target=None)
        layout = ConstraintLayout.from_constraints(cs)
        x = _state([0.45, -0.02, 0.04])
        g = ConstraintService.evaluate_constraints(x, np.zeros(7), cs, plant_model, layout)
        height = PlantService.epm_pose(plant_model, READY_Q).position[2]
        assert g[layout.blocks["epm_floor"]][0] == pytest.approx(0.2 - height)

    def test_orientation_rows_are_direction_error(self, plant_model):
        cs = _constraint_set(obstacles=[])
        layout = ConstraintLayout.from_constraints(cs)
        g = ConstraintService.evaluate_constraints(_state([0.45, -0.02, 0.04]), np.zeros(7), cs, plant_model, layout)
        rows = g[layout.blocks["orientation"]]
        b_hat = rows + np.array([0.0, 1.0, 0.0])
        assert np.linalg.norm(b_hat) == pytest.approx(1.0)

    def test_batched_trajectory(self, plant_model):
        cs = _constraint_set()
        xs = np.tile(_state([0.45, -0.02, 0.04]), (4, 1))
        g = ConstraintService.evaluate_constraints(xs, np.zeros((4, 7)), cs, plant_model)
        assert g.shape == (4, 39)

    def test_jacobians(self, plant_model):
        cs = _constraint_set()
        layout = ConstraintLayout.from_constraints(cs)
        x = _state([0.45, -0.02, 0.04], v=[0.01, 0.0, 0.0])
        u = np.zeros(7)
        g_x, g_u = ConstraintService.constraint_jacobians(x, u, cs, plant_model, layout)
        assert g_x.shape == (39, 13)
        np.testing.assert_array_equal(g_u[14:21], -np.eye(7))
        np.testing.assert_array_equal(g_u[21:28], np.eye(7))
        np.testing.assert_array_equal(g_u[28:], 0.0)
        h = 1e-6
        for j in range(13):
            e = np.zeros(13)
            e[j] = h
            column = (
                ConstraintService.evaluate_constraints(x + e, u, cs, plant_model, layout)
                - ConstraintService.evaluate_constraints(x - e, u, cs, plant_model, layout)
            ) / (2 * h)
            np.testing.assert_allclose(g_x[:, j], column, rtol=1e-4, atol=1e-6)


class TestAugmentedLagrangian:
    def test_penalty_value(self):
        g = np.array([[0.1]])
        assert ConstraintService.al_value(g, _al(g)) == pytest.approx(0.05)

    def test_inactive_inequality_costs_nothing(self):
        g = np.array([[-0.1]])
        al = _al(g)
        assert ConstraintService.active_penalty(g, al)[0, 0] == 0.0
        assert ConstraintService.al_value(g, al) == 0.0

    def test_equality_is_always_active(self):
        g = np.array([[-0.1]])
        al = _al(g, equality=[True])
        assert ConstraintService.active_penalty(g, al)[0, 0] == 10.0
        assert ConstraintService.al_value(g, al) == pytest.approx(0.05)

    def test_rows_that_do_not_apply_are_ignored(self):
        g = np.array([[0.1, 0.2]])
        al = _al(g, multipliers=[[1.0, 0.0]], applicable=[[True, False]])
        assert ConstraintService.al_value(g, al) == pytest.approx(1.0 * 0.1 + 0.05)

    def test_cost_derivatives(self):
        g = np.array([[0.1, -0.2]])
        g_x = np.array([[[1.0, 2.0], [0.0, 1.0]]])
        g_u = np.array([[[0.5], [1.0]]])
        al = _al(g, multipliers=[[2.0, 1.0]])
        base = CostTerms(
            value=np.zeros(1), l_x=np.zeros((1, 2)), l_u=np.zeros((1, 1)),
            l_xx=np.zeros((1, 2, 2)), l_uu=np.zeros((1, 1, 1)), l_ux=np.zeros((1, 1, 2)),
        )
        terms = ConstraintService.al_cost(base, g, g_x, g_u, al)
        weight = np.array([2.0 + 10.0 * 0.1, 1.0 + 10.0 * -0.2])
        np.testing.assert_allclose(terms.l_x[0], g_x[0].T @ weight)
        np.testing.assert_allclose(terms.l_u[0], g_u[0].T @ weight)
        np.testing.assert_allclose(terms.l_xx[0], 10.0 * g_x[0].T @ g_x[0])
        np.testing.assert_allclose(terms.l_ux[0], 10.0 * g_u[0].T @ g_x[0])
        assert terms.value[0] == pytest.approx(ConstraintService.al_value(g, al))

    def test_shape_mismatch_raises(self):
        g = np.zeros((2, 3))
        al = _al(np.zeros((2, 4)))
        base = CostTerms(*(np.zeros(1),) * 6)
        with pytest.raises(ContractViolationError):
            ConstraintService.al_cost(base, g, np.zeros((2, 3, 2)), np.zeros((2, 3, 1)), al)


class TestMultiplierUpdate:
    def test_inequality_step(self):
        g = np.array([[0.2, -0.5]])
        al = _al(g, multipliers=[[1.0, 1.0]])
        updated = ConstraintService.update_multipliers(al, g, scaling=10.0, penalty_max=1e8)
        np.testing.assert_allclose(updated.multipliers, [[3.0, 0.0]])
        assert updated.penalty == pytest.approx(100.0)

    def test_equality_may_go_negative(self):
        g = np.array([[-0.5]])
        al = _al(g, multipliers=[[1.0]], equality=[True])
        updated = ConstraintService.update_multipliers(al, g, scaling=10.0, penalty_max=1e8)
        np.testing.assert_allclose(updated.multipliers, [[-4.0]])

    def test_penalty_is_capped(self):
        g = np.array([[0.0]])
        al = _al(g, penalty=5e7)
        assert ConstraintService.update_multipliers(al, g, scaling=10.0, penalty_max=1e8).penalty == 1e8

    def test_initial_state_respects_mask(self):
        layout = ConstraintLayout.from_constraints(_constraint_set())
        al = AlState.initial(layout, 4, penalty=2.0, multiplier=0.5)
        assert al.multipliers.shape == (5, layout.size)
        assert np.all(al.multipliers[4, 14:28] == 0.0)
        assert np.all(al.multipliers[:4] == 0.5)


class TestViolation:
    def test_violation_by_row_kind(self):
        g = np.array([[0.3, -0.3, -0.2, 0.5]])
        equality = np.array([False, False, True, False])
        applicable = np.array([[True, True, True, False]])
        v = ConstraintService.violation(g, equality, applicable)
        np.testing.assert_allclose(v, [[0.3, 0.0, 0.2, 0.0]])
        assert ConstraintService.max_violation(g, equality, applicable) == pytest.approx(0.3)

    def test_empty(self):
        assert ConstraintService.max_violation(np.zeros((3, 0)), np.zeros(0, dtype=bool), np.zeros((3, 0), dtype=bool)) == 0.0


class TestManipulability:
    def test_zero_weight(self, plant_model):
        value, gradient = ConstraintService.manipulability_penalty(np.array(READY_Q), plant_model, 0.0)
        assert value == 0.0
        np.testing.assert_array_equal(gradient, 0.0)

    def test_value_is_weighted_log_condition(self, plant_model, panda_chain):
        q = np.array(READY_Q)
        value, gradient = ConstraintService.manipulability_penalty(q, plant_model, 2.0)
        kappa = KinematicsService.condition_number(KinematicsService.geometric_jacobian(panda_chain, q))
        assert value == pytest.approx(2.0 * np.log(kappa))
        assert gradient.shape == (7,)


def test_plant_model_from_scenario(toy_scenario):
    model = PlantModel.from_scenario(toy_scenario)
    assert model.min_separation == pytest.approx(0.05)
    assert model.magnetics_enabled

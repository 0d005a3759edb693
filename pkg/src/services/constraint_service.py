from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from src.exceptions import ContractViolationError
from src.models.constraints import ConstraintSet
from src.models.plant import PlantModel
from src.services.config_manager import ConfigManager
from src.services.kinematics_service import KinematicsService
from src.services.magnetics_service import MagneticsService
from src.services.plant_service import P, Q, V, PlantService
from src.utils.numerics import central_difference, unit

DoubleArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]


@dataclass(frozen=True)
class ConstraintLayout:
    """
    Stable row map of the stacked constraint vector.

    Row blocks, in order: joint lower, joint upper, input lower, input upper,
    IPM velocity lower, IPM velocity upper, EPM floor (one row per bounded axis),
    obstacles (one row each), field magnitude (0 or 1 row), orientation (0 or 3
    equality rows). Inequalities are feasible when g <= 0.

    Attributes:
        blocks: name -> slice of the stacked vector
        equality: (c,) True for equality rows
        running: (c,) rows active at running steps 0..N-1
        terminal: (c,) rows active at the terminal step N (no input rows)
    """

    blocks: Dict[str, slice]
    equality: BoolArray
    running: BoolArray
    terminal: BoolArray
    epm_axes: Tuple[int, ...]

    @property
    def size(self) -> int:
        return int(self.equality.shape[0])

    @property
    def nonlinear(self) -> slice:
        """Rows that depend on the EPM pose or the field; they follow all box rows."""
        start = self.blocks["velocity_upper"].stop
        return slice(start, self.size)

    def mask(self, horizon: int) -> BoolArray:
        """(N + 1, c) applicability of every row at every time index."""
        return np.vstack([np.broadcast_to(self.running, (horizon, self.size)), self.terminal[None, :]])

    def row_names(self) -> List[str]:
        names = [""] * self.size
        for name, block in self.blocks.items():
            for offset, row in enumerate(range(block.start, block.stop)):
                names[row] = f"{name}[{offset}]"
        return names

    @classmethod
    def from_constraints(cls, cs: ConstraintSet) -> "ConstraintLayout":
        n_joints = len(cs.joint_limits.lower)
        epm_axes = tuple(i for i, bound in enumerate(cs.epm_min_position) if bound is not None)
        sizes = [
            ("joint_lower", n_joints),
            ("joint_upper", n_joints),
            ("input_lower", n_joints),
            ("input_upper", n_joints),
            ("velocity_lower", 3),
            ("velocity_upper", 3),
            ("epm_floor", len(epm_axes)),
            ("obstacles", len(cs.obstacles)),
            ("field_magnitude", 1 if cs.field_magnitude_min is not None else 0),
            ("orientation", 3 if cs.orientation_target is not None else 0),
        ]
        blocks: Dict[str, slice] = {}
        start = 0
        for name, count in sizes:
            blocks[name] = slice(start, start + count)
            start += count

        equality = np.zeros(start, dtype=bool)
        equality[blocks["orientation"]] = True
        running = np.ones(start, dtype=bool)
        terminal = np.ones(start, dtype=bool)
        terminal[blocks["input_lower"]] = False
        terminal[blocks["input_upper"]] = False
        if not cs.orientation_every_timestep:
            running[blocks["orientation"]] = False
        return cls(blocks=blocks, equality=equality, running=running, terminal=terminal, epm_axes=epm_axes)


@dataclass(frozen=True)
class AlState:
    """
    Augmented-Lagrangian state for one solve.

    multipliers has one row per time index (N + 1, c); rows that do not apply at
    a time index stay zero. The penalty is a single scalar.
    """

    multipliers: DoubleArray
    penalty: float
    equality: BoolArray
    applicable: BoolArray

    @classmethod
    def initial(cls, layout: ConstraintLayout, horizon: int, penalty: Optional[float] = None, multiplier: Optional[float] = None) -> "AlState":
        mu0 = penalty if penalty is not None else ConfigManager.get("al.penalty_init", 1.0)
        lam0 = multiplier if multiplier is not None else ConfigManager.get("al.multiplier_init", 0.0)
        applicable = layout.mask(horizon)
        return cls(
            multipliers=np.where(applicable, lam0, 0.0),
            penalty=float(mu0),
            equality=layout.equality.copy(),
            applicable=applicable,
        )

    def window(self, rows: slice) -> "AlState":
        """Restrict to a range of time indices."""
        return replace(self, multipliers=self.multipliers[rows], applicable=self.applicable[rows])

    @property
    def max_multiplier(self) -> float:
        return float(np.max(np.abs(self.multipliers))) if self.multipliers.size else 0.0


@dataclass(frozen=True)
class CostTerms:
    """Value and derivatives of a stage cost, batched over leading dimensions."""

    value: DoubleArray
    l_x: DoubleArray
    l_u: DoubleArray
    l_xx: DoubleArray
    l_uu: DoubleArray
    l_ux: DoubleArray

    def plus(self, other: "CostTerms") -> "CostTerms":
        return CostTerms(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self) -> Tuple[DoubleArray, ...]:
        return (self.value, self.l_x, self.l_u, self.l_xx, self.l_uu, self.l_ux)


class ConstraintService:
    """
    Constraint evaluation, augmented-Lagrangian cost assembly and multiplier scheduling.

    States (..., 13) and inputs (..., 7) may carry leading batch dimensions; the
    terminal step is evaluated with a zero input and its input rows masked out
    by the layout.

    Usage:
        >>> layout = ConstraintLayout.from_constraints(scenario.constraints)
        >>> g = ConstraintService.evaluate_constraints(xs, us, scenario.constraints, model, layout)
        >>> al = AlState.initial(layout, horizon)
        >>> al = ConstraintService.update_multipliers(al, g)
    """

    @staticmethod
    def evaluate_constraints(
        x: npt.ArrayLike,
        u: npt.ArrayLike,
        cs: ConstraintSet,
        model: PlantModel,
        layout: Optional[ConstraintLayout] = None,
    ) -> DoubleArray:
        """
        Stacked constraint vector, shape (..., c), in the ConstraintLayout row order.

        Obstacle rows are -(|p_I - c| - r - margin); orientation rows are b̂ - r̂.
        """
        layout = layout or ConstraintLayout.from_constraints(cs)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        box = ConstraintService._box_rows(x, u, cs)
        nonlinear = ConstraintService._nonlinear_rows(x, cs, model, layout)
        return np.concatenate([box, nonlinear], axis=-1)

    @staticmethod
    def _box_rows(x: DoubleArray, u: DoubleArray, cs: ConstraintSet) -> DoubleArray:
        q, v = x[..., Q], x[..., V]
        u = np.broadcast_to(u, x.shape[:-1] + (u.shape[-1],))
        blocks = (
            np.asarray(cs.joint_limits.lower) - q,
            q - np.asarray(cs.joint_limits.upper),
            np.asarray(cs.input_limits.lower) - u,
            u - np.asarray(cs.input_limits.upper),
            np.asarray(cs.ipm_velocity_limits.lower) - v,
            v - np.asarray(cs.ipm_velocity_limits.upper),
        )
        return np.concatenate(blocks, axis=-1)

    @staticmethod
    def _nonlinear_rows(x: DoubleArray, cs: ConstraintSet, model: PlantModel, layout: ConstraintLayout) -> DoubleArray:
        p = x[..., P]
        rows: List[DoubleArray] = []
        needs_pose = bool(layout.epm_axes) or cs.field_magnitude_min is not None or cs.orientation_target is not None
        pose = PlantService.epm_pose(model, x[..., Q]) if needs_pose else None

        if layout.epm_axes:
            floor = np.array([cs.epm_min_position[i] for i in layout.epm_axes])
            rows.append(floor - pose.position[..., list(layout.epm_axes)])

        for obstacle in cs.obstacles:
            distance = np.linalg.norm(p - np.asarray(obstacle.center), axis=-1)
            rows.append(-(distance - obstacle.radius - obstacle.margin)[..., None])

        if cs.field_magnitude_min is not None or cs.orientation_target is not None:
            sep = PlantService.separation(model, p, pose)
            m_hat = PlantService.epm_dipole_direction(model, pose)
            if cs.field_magnitude_min is not None:
                b = MagneticsService.dipole_field(sep, model.epm.dipole_magnitude * m_hat)
                rows.append(cs.field_magnitude_min - np.linalg.norm(b, axis=-1, keepdims=True))
            if cs.orientation_target is not None:
                b_hat = MagneticsService.field_direction(sep, m_hat)
                rows.append(b_hat - unit(cs.orientation_target))

        if not rows:
            return np.zeros(x.shape[:-1] + (0,))
        return np.concatenate(rows, axis=-1)

    @staticmethod
    def constraint_jacobians(
        x: npt.ArrayLike,
        u: npt.ArrayLike,
        cs: ConstraintSet,
        model: PlantModel,
        layout: ConstraintLayout,
        fd_step: Optional[float] = None,
    ) -> Tuple[DoubleArray, DoubleArray]:
        """
        g_x (..., c, 13) and g_u (..., c, 7).

        Box rows are exact. Rows that depend on the EPM pose or the field are
        differentiated with one batched central difference over the state; none
        of them depend on u.
        """
        step_size = fd_step if fd_step is not None else ConfigManager.get("solver.fd_step", 1e-6)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        n, m = x.shape[-1], u.shape[-1]
        batch = x.shape[:-1]
        g_x = np.zeros(batch + (layout.size, n))
        g_u = np.zeros(batch + (layout.size, m))
        eye_m = np.eye(m)
        eye_v = np.eye(3)
        g_x[..., layout.blocks["joint_lower"], Q] = -eye_m
        g_x[..., layout.blocks["joint_upper"], Q] = eye_m
        g_u[..., layout.blocks["input_lower"], :] = -eye_m
        g_u[..., layout.blocks["input_upper"], :] = eye_m
        g_x[..., layout.blocks["velocity_lower"], V] = -eye_v
        g_x[..., layout.blocks["velocity_upper"], V] = eye_v

        if layout.nonlinear.stop > layout.nonlinear.start:
            g_x[..., layout.nonlinear, :] = central_difference(
                lambda xx: ConstraintService._nonlinear_rows(xx, cs, model, layout), x, step_size
            )
        return g_x, g_u

    @staticmethod
    def active_penalty(g: DoubleArray, al: AlState) -> DoubleArray:
        """
        Diagonal I_mu per row: 0 for inactive inequality rows (g < 0 and lambda = 0)
        and for rows that do not apply at that time index, mu otherwise.
        """
        inactive = (~al.equality) & (g < 0.0) & (al.multipliers == 0.0)
        return np.where(al.applicable & ~inactive, al.penalty, 0.0)

    @staticmethod
    def al_cost(
        base: CostTerms,
        g: DoubleArray,
        g_x: DoubleArray,
        g_u: DoubleArray,
        al: AlState,
    ) -> CostTerms:
        """
        Add the augmented-Lagrangian terms to a base cost, batched over time.

            L = l + (lambda + ½ I_mu g)ᵀ g
            L_x = l_x + g_xᵀ (lambda + I_mu g)
            L_xx = l_xx + g_xᵀ I_mu g_x   (Gauss-Newton)

        Raises:
            ContractViolationError: If g, its Jacobians and the multipliers disagree in shape
        """
        if g.shape != al.multipliers.shape:
            raise ContractViolationError("g", f"shape {g.shape} does not match multipliers {al.multipliers.shape}")
        if g_x.shape[:-1] != g.shape or g_u.shape[:-1] != g.shape:
            raise ContractViolationError("g_x/g_u", f"Jacobian shapes {g_x.shape}, {g_u.shape} do not match g {g.shape}")

        lam = np.where(al.applicable, al.multipliers, 0.0)
        i_mu = ConstraintService.active_penalty(g, al)
        g_used = np.where(al.applicable, g, 0.0)
        weight = lam + i_mu * g_used

        value = base.value + np.sum((lam + 0.5 * i_mu * g_used) * g_used, axis=-1)
        l_x = base.l_x + np.einsum("...ci,...c->...i", g_x, weight)
        l_u = base.l_u + np.einsum("...ci,...c->...i", g_u, weight)
        l_xx = base.l_xx + np.einsum("...ci,...c,...cj->...ij", g_x, i_mu, g_x)
        l_uu = base.l_uu + np.einsum("...ci,...c,...cj->...ij", g_u, i_mu, g_u)
        l_ux = base.l_ux + np.einsum("...ci,...c,...cj->...ij", g_u, i_mu, g_x)
        return CostTerms(value, l_x, l_u, l_xx, l_uu, l_ux)

    @staticmethod
    def al_value(g: DoubleArray, al: AlState) -> float:
        """Sum of the augmented-Lagrangian terms over a trajectory."""
        lam = np.where(al.applicable, al.multipliers, 0.0)
        i_mu = ConstraintService.active_penalty(g, al)
        g_used = np.where(al.applicable, g, 0.0)
        return float(np.sum((lam + 0.5 * i_mu * g_used) * g_used))

    @staticmethod
    def update_multipliers(
        al: AlState,
        g_traj: DoubleArray,
        scaling: Optional[float] = None,
        penalty_max: Optional[float] = None,
    ) -> AlState:
        """
        Outer-loop update after a converged inner solve.

        Inequality rows: lambda <- max(0, lambda + mu g). Equality rows: lambda <- lambda + mu h.
        Then mu <- min(mu phi, mu_max).
        """
        phi = scaling if scaling is not None else ConfigManager.get("al.penalty_scaling", 10.0)
        mu_max = penalty_max if penalty_max is not None else ConfigManager.get("al.penalty_max", 1e8)
        if g_traj.shape != al.multipliers.shape:
            raise ContractViolationError("g_traj", f"shape {g_traj.shape} does not match multipliers {al.multipliers.shape}")

        stepped = al.multipliers + al.penalty * g_traj
        updated = np.where(al.equality, stepped, np.maximum(0.0, stepped))
        updated = np.where(al.applicable, updated, 0.0)
        return replace(al, multipliers=updated, penalty=float(min(al.penalty * phi, mu_max)))

    @staticmethod
    def violation(g: DoubleArray, equality: BoolArray, applicable: BoolArray) -> DoubleArray:
        """Per-row violation: max(g, 0) for inequalities, |h| for equalities, 0 where not applicable."""
        raw = np.where(equality, np.abs(g), np.maximum(g, 0.0))
        return np.where(applicable, raw, 0.0)

    @staticmethod
    def max_violation(g: DoubleArray, equality: BoolArray, applicable: BoolArray) -> float:
        v = ConstraintService.violation(g, equality, applicable)
        return float(np.max(v)) if v.size else 0.0

    @staticmethod
    def manipulability_penalty(
        q: npt.ArrayLike,
        model: PlantModel,
        weight: float,
        fd_step: Optional[float] = None,
    ) -> Tuple[DoubleArray, DoubleArray]:
        """
        weight·log(kappa(J(q))) and its gradient by batched central differences.

        log is monotone in kappa and stays finite at the singularity sentinel.

        Returns:
            value (...,) and gradient (..., n)
        """
        q = np.asarray(q, dtype=float)
        if weight == 0.0:
            return np.zeros(q.shape[:-1]), np.zeros(q.shape)
        step_size = fd_step if fd_step is not None else ConfigManager.get("solver.fd_step", 1e-6)

        def penalty(qq: DoubleArray) -> DoubleArray:
            J = KinematicsService.geometric_jacobian(model.chain, qq)
            return np.log(KinematicsService.condition_number(J))[..., None]

        value = weight * penalty(q)[..., 0]
        gradient = weight * central_difference(penalty, q, step_size)[..., 0, :]
        return value, gradient

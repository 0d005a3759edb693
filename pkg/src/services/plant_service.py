from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from src.exceptions import RolloutDivergedError, SeparationError
from src.models.kinematics import EpmPose
from src.models.magnet import Separation
from src.models.plant import PlantModel
from src.services.config_manager import ConfigManager
from src.services.kinematics_service import KinematicsService
from src.services.magnetics_service import MagneticsService
from src.utils.numerics import central_difference

DoubleArray = npt.NDArray[np.float64]

P = slice(0, 3)
V = slice(3, 6)
Q = slice(6, 13)

# RK4 stage times as fractions of dt; stages 2 and 3 share the midpoint pose.
_STAGE_FRACTIONS = np.array([0.0, 0.5, 1.0])
_STAGE_POSE = (0, 1, 1, 2)


class PlantService:
    """
    Discrete-time EPM+IPM transition x' = f(x, u, dt) and its Jacobians.

    State x = [p_I (3), v_I (3), q (7)], control u = joint velocities (7).
    Joints integrate exactly; the IPM is advanced with RK4 while the EPM pose
    is re-evaluated at each stage from the interpolated joint angles.

    Usage:
        >>> model = PlantModel.from_scenario(scenario)
        >>> x_next = PlantService.step(x, u, 0.02, model)
        >>> f_x, f_u = PlantService.linearize(states[:-1], inputs, 0.02, model)
    """

    @staticmethod
    def epm_pose(model: PlantModel, q: npt.ArrayLike) -> EpmPose:
        return KinematicsService.forward_kinematics(model.chain, q)

    @staticmethod
    def epm_dipole_direction(model: PlantModel, pose: EpmPose) -> DoubleArray:
        return pose.dipole_axis(model.epm.axis)

    @staticmethod
    def separation(model: PlantModel, p_I: npt.ArrayLike, pose: EpmPose) -> Separation:
        return Separation.of(np.asarray(p_I, dtype=float) - pose.position, model.min_separation)

    @staticmethod
    def magnetic_force(model: PlantModel, p_I: npt.ArrayLike, pose: EpmPose) -> DoubleArray:
        """Aligned-moment force on the IPM (N); zero when magnetics are disabled."""
        p_I = np.asarray(p_I, dtype=float)
        if not model.magnetics_enabled:
            return np.zeros(np.broadcast_shapes(p_I.shape, pose.position.shape))
        sep = PlantService.separation(model, p_I, pose)
        return MagneticsService.aligned_force(
            sep,
            PlantService.epm_dipole_direction(model, pose),
            model.epm.dipole_magnitude,
            model.ipm.dipole_magnitude,
        )

    @staticmethod
    def ipm_acceleration(
        p_I: npt.ArrayLike,
        v_I: npt.ArrayLike,
        pose: EpmPose,
        model: PlantModel,
    ) -> DoubleArray:
        """
        a = (f_m + f_w - C_d |v| v) / m_IPM

        Raises:
            SeparationError: If |p_I - p_E| is below the model's min_separation
        """
        v = np.asarray(v_I, dtype=float)
        fluid = model.fluid
        drag = fluid.drag_coefficient * np.linalg.norm(v, axis=-1, keepdims=True) * v
        force = PlantService.magnetic_force(model, p_I, pose) + fluid.weight_vector - drag
        return force / fluid.ipm_mass

    @staticmethod
    def stage_poses(model: PlantModel, q: DoubleArray, u: DoubleArray, dt: float) -> Optional[EpmPose]:
        """EPM poses at t = 0, dt/2, dt along q + u·t, stacked on axis -2 of the joint batch."""
        if not model.magnetics_enabled:
            return None
        q_stages = q[..., None, :] + (_STAGE_FRACTIONS[:, None] * dt) * u[..., None, :]
        return KinematicsService.forward_kinematics(model.chain, q_stages)

    @staticmethod
    def propagate_ipm(
        p: npt.ArrayLike,
        v: npt.ArrayLike,
        q: npt.ArrayLike,
        u: npt.ArrayLike,
        dt: float,
        model: PlantModel,
    ) -> Tuple[DoubleArray, DoubleArray]:
        """
        Advance the IPM position and velocity over one control interval with RK4.

        Shared by the plant and the EKF so both integrate identically.

        Raises:
            SeparationError: Annotated with the RK4 stage (0-3) that violated the floor
        """
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        q = np.asarray(q, dtype=float)
        u = np.asarray(u, dtype=float)
        poses = PlantService.stage_poses(model, q, u, dt)
        placeholder = EpmPose(position=np.zeros(3), rotation=np.eye(3))

        def accel(stage: int, p_s: DoubleArray, v_s: DoubleArray) -> DoubleArray:
            if poses is None:
                pose = placeholder
            else:
                k = _STAGE_POSE[stage]
                pose = EpmPose(position=poses.position[..., k, :], rotation=poses.rotation[..., k, :, :])
            try:
                return PlantService.ipm_acceleration(p_s, v_s, pose, model)
            except SeparationError as e:
                raise e.at_stage(stage) from e

        half = 0.5 * dt
        a1 = accel(0, p, v)
        p2, v2 = p + half * v, v + half * a1
        a2 = accel(1, p2, v2)
        p3, v3 = p + half * v2, v + half * a2
        a3 = accel(2, p3, v3)
        p4, v4 = p + dt * v3, v + dt * a3
        a4 = accel(3, p4, v4)

        sixth = dt / 6.0
        p_next = p + sixth * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v_next = v + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        return p_next, v_next

    @staticmethod
    def step(x: npt.ArrayLike, u: npt.ArrayLike, dt: float, model: PlantModel) -> DoubleArray:
        """
        One control interval of the combined plant, batched over leading dimensions.

        Raises:
            SeparationError: If the separation floor is violated at any RK4 stage
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        p_next, v_next = PlantService.propagate_ipm(x[..., P], x[..., V], x[..., Q], u, dt, model)
        return np.concatenate([p_next, v_next, x[..., Q] + u * dt], axis=-1)

    @staticmethod
    def linearize(
        x: npt.ArrayLike,
        u: npt.ArrayLike,
        dt: float,
        model: PlantModel,
        fd_step: Optional[float] = None,
    ) -> Tuple[DoubleArray, DoubleArray]:
        """
        Jacobians f_x (..., 13, 13) and f_u (..., 13, 7) of step.

        Joint rows are exact (identity and dt·I). The six IPM rows come from one
        batched central-difference evaluation over all 20 state and input
        coordinates of every batch element.
        """
        step_size = fd_step if fd_step is not None else ConfigManager.get("solver.fd_step", 1e-6)
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        n, m = x.shape[-1], u.shape[-1]
        z = np.concatenate([x, u], axis=-1)

        def ipm_map(zz: DoubleArray) -> DoubleArray:
            p_next, v_next = PlantService.propagate_ipm(
                zz[..., P], zz[..., V], zz[..., Q], zz[..., n:], dt, model
            )
            return np.concatenate([p_next, v_next], axis=-1)

        jac = central_difference(ipm_map, z, step_size)

        batch = x.shape[:-1]
        f_x = np.zeros(batch + (n, n))
        f_u = np.zeros(batch + (n, m))
        f_x[..., :6, :] = jac[..., :, :n]
        f_u[..., :6, :] = jac[..., :, n:]
        f_x[..., Q, Q] = np.eye(m)
        f_u[..., Q, :] = dt * np.eye(m)
        return f_x, f_u

    @staticmethod
    def rollout(x0: npt.ArrayLike, inputs: npt.ArrayLike, dt: float, model: PlantModel) -> DoubleArray:
        """
        Sequential rollout, states (N + 1, 13).

        Raises:
            SeparationError: Separation floor violated during a step
            RolloutDivergedError: A state became non-finite
        """
        inputs = np.asarray(inputs, dtype=float)
        states = np.empty((inputs.shape[0] + 1, np.shape(x0)[-1]))
        states[0] = x0
        for k, u_k in enumerate(inputs):
            states[k + 1] = PlantService.step(states[k], u_k, dt, model)
            if not np.all(np.isfinite(states[k + 1])):
                raise RolloutDivergedError(k, "non-finite state")
        return states

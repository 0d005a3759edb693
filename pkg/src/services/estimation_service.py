from typing import Optional, Tuple

import numpy as np
import numpy.typing as npt

from src.exceptions import ContractViolationError, SeparationError
from src.models.plant import PlantModel
from src.models.runtime import EkfState
from src.models.scenario import EstimationSettings
from src.services.logger import get_logger
from src.services.plant_service import PlantService
from src.utils.numerics import central_difference, symmetrize

logger = get_logger(__name__)

DoubleArray = npt.NDArray[np.float64]

_H = np.hstack([np.eye(3), np.zeros((3, 3))])


class EstimationService:
    """
    Extended Kalman filter for the IPM position and velocity.

    Prediction integrates the same IPM dynamics as the plant (or a constant-velocity
    model when configured) with the joint angles read from the encoders and the
    input actually applied. Updates take noisy position measurements.

    Usage:
        >>> ekf = EstimationService.initial_state(x0, 1e-6, 1e-6)
        >>> ekf = EstimationService.ekf_predict(ekf, q, u, 0.02, model, settings)
        >>> ekf = EstimationService.ekf_update(ekf, z, 1e-6)
    """

    @staticmethod
    def initial_state(x0: npt.ArrayLike, position_variance: float, velocity_variance: float) -> EkfState:
        """Prior centred on the planned start, diagonal covariance (m², (m/s)²)."""
        x0 = np.asarray(x0, dtype=float)
        covariance = np.diag([position_variance] * 3 + [velocity_variance] * 3)
        return EkfState(mean=x0[:6].copy(), covariance=covariance)

    @staticmethod
    def transition(
        mean: DoubleArray,
        q: DoubleArray,
        u: DoubleArray,
        dt: float,
        model: PlantModel,
        process_model: str,
    ) -> DoubleArray:
        """Predicted [p, v] for one or a batch of means."""
        p, v = mean[..., :3], mean[..., 3:]
        if process_model == "constant_velocity":
            return np.concatenate([p + dt * v, v], axis=-1)
        p_next, v_next = PlantService.propagate_ipm(p, v, q, u, dt, model)
        return np.concatenate([p_next, v_next], axis=-1)

    @staticmethod
    def transition_jacobian(
        mean: DoubleArray,
        q: DoubleArray,
        u: DoubleArray,
        dt: float,
        model: PlantModel,
        process_model: str,
        fd_step: float = 1e-6,
    ) -> DoubleArray:
        """6×6 Jacobian of transition with respect to [p, v]."""
        if process_model == "constant_velocity":
            F = np.eye(6)
            F[:3, 3:] = dt * np.eye(3)
            return F
        return central_difference(
            lambda m: EstimationService.transition(m, q, u, dt, model, process_model), mean, fd_step
        )

    @staticmethod
    def ekf_predict(
        ekf: EkfState,
        q: npt.ArrayLike,
        u: npt.ArrayLike,
        dt: float,
        model: PlantModel,
        settings: Optional[EstimationSettings] = None,
    ) -> EkfState:
        """
        Propagate mean and covariance over one control interval.

        When the magnetic prediction violates the separation floor the step is
        repeated with drag and weight only, flagged as fallback_used.

        Args:
            ekf: Current estimate
            q: Measured joint angles at the start of the interval
            u: Joint velocities applied over the interval
            dt: Interval length (s), must be positive
            model: Plant model used for prediction
            settings: Process model and process noise, ConfigManager defaults otherwise
        """
        if dt <= 0.0:
            raise ContractViolationError("dt", f"must be positive, got {dt}")
        settings = settings or EstimationSettings.defaults()
        q = np.asarray(q, dtype=float)
        u = np.asarray(u, dtype=float)

        fallback = False
        try:
            mean, F = EstimationService._propagate(ekf.mean, q, u, dt, model, settings.process_model)
        except SeparationError as e:
            logger.warning(f"EKF prediction fell back to drag-and-weight dynamics: {e.message}")
            mean, F = EstimationService._propagate(ekf.mean, q, u, dt, model.without_magnetics(), settings.process_model)
            fallback = True

        process_noise = np.diag(
            [settings.process_noise_position] * 3 + [settings.process_noise_velocity] * 3
        )
        covariance = symmetrize(F @ ekf.covariance @ F.T + process_noise)
        return EkfState(mean=mean, covariance=covariance, fallback_used=fallback)

    @staticmethod
    def _propagate(
        mean: DoubleArray, q: DoubleArray, u: DoubleArray, dt: float, model: PlantModel, process_model: str
    ) -> Tuple[DoubleArray, DoubleArray]:
        predicted = EstimationService.transition(mean, q, u, dt, model, process_model)
        F = EstimationService.transition_jacobian(mean, q, u, dt, model, process_model)
        return predicted, F

    @staticmethod
    def ekf_update(ekf: EkfState, z: npt.ArrayLike, variance: float) -> EkfState:
        """
        Position-measurement update in Joseph form.

        Args:
            ekf: Predicted estimate
            z: Measured IPM position (m)
            variance: Measurement variance per axis (m²), must be positive

        Returns:
            Posterior estimate; the input estimate unchanged when z is not finite
        """
        if not variance > 0.0:
            raise ContractViolationError("variance", f"measurement variance must be positive, got {variance}")
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)):
            logger.warning(f"EKF rejected non-finite measurement {z.tolist()}")
            return ekf

        P = ekf.covariance
        R = variance * np.eye(3)
        S = symmetrize(P[:3, :3] + R)
        gain = np.linalg.solve(S, P[:3, :]).T
        innovation = z - ekf.mean[:3]
        mean = ekf.mean + gain @ innovation
        I_KH = np.eye(6) - gain @ _H
        covariance = symmetrize(I_KH @ P @ I_KH.T + gain @ R @ gain.T)
        return EkfState(mean=mean, covariance=covariance, fallback_used=ekf.fallback_used)

import numpy as np
import numpy.typing as npt

from src.config import Config
from src.models.magnet import Separation

DoubleArray = npt.NDArray[np.float64]

# mu0 / (4 pi)
_K = Config.MU0 / (4.0 * np.pi)


class MagneticsService:
    """
    Point-dipole interaction between the EPM and the IPM.

    Every operation accepts leading batch dimensions on its vector arguments and
    returns arrays with the same leading shape. Inputs must come through
    Separation.of(), which has already rejected separations below the validity
    floor with a SeparationError.

    Usage:
        >>> sep = Separation.of([0.15, 0.0, 0.0], 0.05)
        >>> MagneticsService.dipole_field(sep, np.array([51.25, 0.0, 0.0]))
        array([0.00303704, 0.        , 0.        ])
        >>> MagneticsService.aligned_force(sep, np.array([1.0, 0, 0]), 51.25, 0.142)
        array([-0.00862519, 0.        , 0.        ])
    """

    @staticmethod
    def dipole_field(sep: Separation, m_E: npt.ArrayLike) -> DoubleArray:
        """
        Field of the EPM dipole at the IPM.

        b = mu0 / (4 pi |p|^3) (3 p̂ p̂ᵀ - I) m_E

        Returns:
            Field in Tesla, shape (..., 3)
        """
        m = np.asarray(m_E, dtype=float)
        p_hat = sep.direction
        along = np.sum(p_hat * m, axis=-1, keepdims=True)
        scale = (_K / sep.norm**3)[..., None]
        return scale * (3.0 * along * p_hat - m)

    @staticmethod
    def field_gradient(sep: Separation, m_E: npt.ArrayLike) -> DoubleArray:
        """
        Spatial gradient G[i, j] = d b_i / d p_j of the dipole field.

        G = 3 mu0 / (4 pi |p|^4) (m p̂ᵀ + p̂ mᵀ + (p̂·m)(I - 5 p̂ p̂ᵀ))

        The result is symmetric and traceless.

        Returns:
            Gradient in T/m, shape (..., 3, 3)
        """
        m = np.asarray(m_E, dtype=float)
        m = np.broadcast_to(m, np.broadcast_shapes(m.shape, sep.direction.shape))
        p_hat = sep.direction
        along = np.sum(p_hat * m, axis=-1)[..., None, None]
        outer_mp = m[..., :, None] * p_hat[..., None, :]
        outer_pp = p_hat[..., :, None] * p_hat[..., None, :]
        scale = (3.0 * _K / sep.norm**4)[..., None, None]
        return scale * (outer_mp + np.swapaxes(outer_mp, -1, -2) + along * (np.eye(3) - 5.0 * outer_pp))

    @staticmethod
    def magnetic_torque(m_I: npt.ArrayLike, b: npt.ArrayLike) -> DoubleArray:
        """Torque m_I × b on the IPM (N·m). Diagnostic only; the IPM is assumed aligned."""
        return np.cross(np.asarray(m_I, dtype=float), np.asarray(b, dtype=float))

    @staticmethod
    def aligned_force(
        sep: Separation,
        m_hat_E: npt.ArrayLike,
        m_E_magnitude: float,
        m_I_magnitude: float,
    ) -> DoubleArray:
        """
        Force on an IPM whose moment is aligned with the local field.

        With a = p̂·m̂_E the closed form is

            f = 3 mu0 |m_E| |m_I| / (4 pi |p|^4 sqrt(1 + 3 a²)) (a m̂_E - (1 + 4 a²) p̂)

        where sqrt(1 + 3 a²) = |(3 p̂ p̂ᵀ - I) m̂_E|. It agrees with composed_force.

        Args:
            sep: EPM-to-IPM separation
            m_hat_E: Unit EPM dipole direction, shape (..., 3)
            m_E_magnitude: |m_E| (A·m²)
            m_I_magnitude: |m_I| (A·m²)

        Returns:
            Force on the IPM in N, shape (..., 3)
        """
        m_hat = np.asarray(m_hat_E, dtype=float)
        p_hat = sep.direction
        a = np.sum(p_hat * m_hat, axis=-1, keepdims=True)
        scale = (3.0 * _K * m_E_magnitude * m_I_magnitude / sep.norm**4)[..., None]
        return scale / np.sqrt(1.0 + 3.0 * a**2) * (a * m_hat - (1.0 + 4.0 * a**2) * p_hat)

    @staticmethod
    def composed_force(sep: Separation, m_E: npt.ArrayLike, m_I_magnitude: float) -> DoubleArray:
        """(|m_I| b̂ · ∇) b assembled from dipole_field and field_gradient."""
        b = MagneticsService.dipole_field(sep, m_E)
        b_hat = b / np.linalg.norm(b, axis=-1, keepdims=True)
        grad = MagneticsService.field_gradient(sep, m_E)
        return m_I_magnitude * np.einsum("...ij,...j->...i", grad, b_hat)

    @staticmethod
    def field_direction(sep: Separation, m_hat_E: npt.ArrayLike) -> DoubleArray:
        """Unit field direction at the IPM; independent of |m_E|."""
        u = MagneticsService.dipole_field(sep, m_hat_E)
        return u / np.linalg.norm(u, axis=-1, keepdims=True)

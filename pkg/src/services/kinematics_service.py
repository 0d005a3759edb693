from typing import Tuple, Union

import numpy as np
import numpy.typing as npt

from src.models.kinematics import DhRow, DhTable, EpmPose, KinematicChain
from src.services.config_manager import ConfigManager

DoubleArray = npt.NDArray[np.float64]
ChainLike = Union[DhTable, KinematicChain]


def _as_chain(dh: ChainLike) -> KinematicChain:
    return dh.to_chain() if isinstance(dh, DhTable) else dh


class KinematicsService:
    """
    Forward kinematics, geometric Jacobian and conditioning of the arm carrying the EPM.

    Joint vectors may carry leading batch dimensions, (..., n). Both the classic
    (Rz·Tz·Tx·Rx) and modified (Rx·Tx·Rz·Tz) DH conventions are supported, chosen
    by the table's convention flag.

    Usage:
        >>> chain = KinematicsService.panda_table().to_chain()
        >>> pose = KinematicsService.forward_kinematics(chain, np.zeros(7))
        >>> J = KinematicsService.geometric_jacobian(chain, np.zeros(7))
        >>> KinematicsService.condition_number(J)
    """

    @staticmethod
    def link_transforms(chain: KinematicChain, q: npt.ArrayLike) -> DoubleArray:
        """Per-joint homogeneous transforms, shape (..., n, 4, 4)."""
        theta = np.asarray(q, dtype=float) + chain.theta_offset
        ct, st = np.cos(theta), np.sin(theta)
        ca = np.broadcast_to(np.cos(chain.alpha), theta.shape)
        sa = np.broadcast_to(np.sin(chain.alpha), theta.shape)
        a = np.broadcast_to(chain.a, theta.shape)
        d = np.broadcast_to(chain.d, theta.shape)
        zero = np.zeros_like(theta)
        one = np.ones_like(theta)

        if chain.modified:
            rows = (
                (ct, -st, zero, a),
                (st * ca, ct * ca, -sa, -d * sa),
                (st * sa, ct * sa, ca, d * ca),
                (zero, zero, zero, one),
            )
        else:
            rows = (
                (ct, -st * ca, st * sa, a * ct),
                (st, ct * ca, -ct * sa, a * st),
                (zero, sa, ca, d),
                (zero, zero, zero, one),
            )
        return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)

    @staticmethod
    def joint_frames(chain: KinematicChain, q: npt.ArrayLike) -> Tuple[DoubleArray, DoubleArray]:
        """
        Cumulative base-to-frame transforms.

        Returns:
            frames: (..., n + 1, 4, 4), frames[0] is the base, frames[i] the frame after joint i
            tip: (..., 4, 4) EPM pose including the tool transform
        """
        links = KinematicsService.link_transforms(chain, q)
        n = chain.joint_count
        frames = [np.broadcast_to(np.eye(4), links.shape[:-3] + (4, 4))]
        for i in range(n):
            frames.append(frames[-1] @ links[..., i, :, :])
        tip = frames[-1] @ chain.tool
        return np.stack(frames, axis=-3), tip

    @staticmethod
    def forward_kinematics(dh: ChainLike, q: npt.ArrayLike) -> EpmPose:
        """
        EPM centre pose for joint angles q.

        Args:
            dh: DhTable or its compiled KinematicChain
            q: Joint angles (rad), shape (..., n)

        Returns:
            EpmPose with position (..., 3) and rotation (..., 3, 3)
        """
        chain = _as_chain(dh)
        _, tip = KinematicsService.joint_frames(chain, q)
        return EpmPose(position=tip[..., :3, 3], rotation=tip[..., :3, :3])

    @staticmethod
    def geometric_jacobian(dh: ChainLike, q: npt.ArrayLike) -> DoubleArray:
        """
        Revolute-joint geometric Jacobian for the EPM centre, shape (..., 6, n).

        Rows 0-2 are linear velocity (m/rad), rows 3-5 angular velocity (rad/rad).
        Classic DH joint i turns about z of frame i-1; modified DH about z of frame i.
        """
        chain = _as_chain(dh)
        frames, tip = KinematicsService.joint_frames(chain, q)
        axes_frames = frames[..., 1:, :, :] if chain.modified else frames[..., :-1, :, :]
        z = axes_frames[..., :3, 2]
        origins = axes_frames[..., :3, 3]
        lever = tip[..., None, :3, 3] - origins
        linear = np.cross(z, lever)
        return np.concatenate([np.swapaxes(linear, -1, -2), np.swapaxes(z, -1, -2)], axis=-2)

    @staticmethod
    def condition_number(J: npt.ArrayLike) -> DoubleArray:
        """
        sigma_max / sigma_min of J, batched over leading dimensions.

        Returns the configured sentinel (default 1e12) when sigma_min is below
        the singular floor relative to sigma_max, including an all-zero J.
        """
        sentinel = ConfigManager.get("kinematics.condition_sentinel", 1e12)
        floor = ConfigManager.get("kinematics.singular_floor", 1e-12)
        sigma = np.linalg.svd(np.asarray(J, dtype=float), compute_uv=False)
        s_max, s_min = sigma[..., 0], sigma[..., -1]
        singular = ~(s_min >= floor * s_max) | (s_max == 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa = np.where(singular, sentinel, s_max / np.where(singular, 1.0, s_min))
        return np.maximum(kappa, 1.0)

    @staticmethod
    def position_lipschitz_bound(dh: ChainLike) -> float:
        """
        L with |Δp_E| <= L·|Δq| for all q.

        Every Jacobian column has norm at most the total reach R (sum of link
        lengths and offsets plus the tool offset), hence |J|_2 <= R·sqrt(n).
        """
        chain = _as_chain(dh)
        reach = float(np.sum(np.abs(chain.a)) + np.sum(np.abs(chain.d)) + np.linalg.norm(chain.tool[:3, 3]))
        return reach * float(np.sqrt(chain.joint_count))

    @staticmethod
    def panda_table(tool_offset: float = 0.107 + 0.035) -> DhTable:
        """
        Representative Franka Panda chain in modified DH with the EPM on the flange axis.

        The tool is a pure translation along joint 7's axis, so the EPM centre and a
        dipole along the tool z axis do not depend on q7.

        Args:
            tool_offset: Flange (0.107 m) plus mount-to-magnet-centre distance (m)
        """
        half_pi = np.pi / 2.0
        a = [0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088]
        d = [0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0]
        alpha = [0.0, -half_pi, half_pi, half_pi, -half_pi, half_pi, half_pi]
        tool = np.eye(4)
        tool[2, 3] = tool_offset
        return DhTable(
            rows=[DhRow(a=ai, d=di, alpha=al) for ai, di, al in zip(a, d, alpha)],
            tool_transform=tool.tolist(),
            convention="modified",
        )

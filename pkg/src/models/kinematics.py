from dataclasses import dataclass
from typing import List, Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, field_validator

DoubleArray = npt.NDArray[np.float64]


class DhRow(BaseModel):
    """One Denavit-Hartenberg link: lengths in m, angles in rad."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = 0.0
    d: float = 0.0
    alpha: float = 0.0
    theta_offset: float = 0.0


class DhTable(BaseModel):
    """
    Kinematic description of the serial arm carrying the EPM.

    Attributes:
        rows: One DhRow per revolute joint, base to tip
        tool_transform: 4×4 homogeneous transform from the last joint frame to the
            EPM centre; the EPM dipole axis is given in this tool frame by MagnetSpec
        convention: "classic" (Rz·Tz·Tx·Rx) or "modified" (Craig: Rx·Tx·Rz·Tz)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    rows: List[DhRow] = Field(min_length=1)
    tool_transform: List[List[float]] = Field(
        default_factory=lambda: np.eye(4).tolist()
    )
    convention: Literal["classic", "modified"] = "classic"

    @field_validator("tool_transform")
    @classmethod
    def _homogeneous_tool(cls, value: List[List[float]]) -> List[List[float]]:
        mat = np.asarray(value, dtype=float)
        if mat.shape != (4, 4):
            raise ValueError(f"tool_transform must be 4x4, got shape {mat.shape}")
        rot = mat[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("tool_transform rotation block is not orthonormal within 1e-9")
        if not np.allclose(mat[3], [0.0, 0.0, 0.0, 1.0], atol=0.0, rtol=0.0):
            raise ValueError("tool_transform last row must be [0, 0, 0, 1]")
        return value

    @property
    def joint_count(self) -> int:
        return len(self.rows)

    def to_chain(self) -> "KinematicChain":
        """Compile into the array form used by KinematicsService."""
        return KinematicChain(
            a=np.array([r.a for r in self.rows]),
            d=np.array([r.d for r in self.rows]),
            alpha=np.array([r.alpha for r in self.rows]),
            theta_offset=np.array([r.theta_offset for r in self.rows]),
            tool=np.asarray(self.tool_transform, dtype=float),
            modified=self.convention == "modified",
        )


@dataclass(frozen=True)
class KinematicChain:
    """Array form of a DhTable. Immutable and safe to share between threads."""

    a: DoubleArray
    d: DoubleArray
    alpha: DoubleArray
    theta_offset: DoubleArray
    tool: DoubleArray
    modified: bool

    @property
    def joint_count(self) -> int:
        return int(self.a.shape[0])


@dataclass(frozen=True)
class EpmPose:
    """
    EPM centre position (m) and orientation in the arm base frame.

    Leading batch dimensions are allowed: position (..., 3), rotation (..., 3, 3).
    """

    position: DoubleArray
    rotation: DoubleArray

    def dipole_axis(self, axis_in_mount_frame: DoubleArray) -> DoubleArray:
        """Unit dipole direction R_E·axis in the base frame."""
        return np.einsum("...ij,j->...i", self.rotation, axis_in_mount_frame)

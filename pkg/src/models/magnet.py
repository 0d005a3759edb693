from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.exceptions import SeparationError

DoubleArray = npt.NDArray[np.float64]


class MagnetSpec(BaseModel):
    """
    Permanent magnet modelled as a point dipole.

    Attributes:
        dipole_magnitude: |m| in A·m² (EPM 51.25, IPM 0.142 for the reference hardware)
        axis_in_mount_frame: Unit dipole direction expressed in the mounting frame
            (the EPM tool frame, or the capsule body frame for the IPM)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    dipole_magnitude: float = Field(gt=0.0)
    axis_in_mount_frame: Tuple[float, float, float] = (0.0, 0.0, 1.0)

    @field_validator("axis_in_mount_frame")
    @classmethod
    def _unit_axis(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        norm = float(np.linalg.norm(value))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"axis must have unit norm within 1e-9, got norm {norm:.12g}")
        return value

    @property
    def axis(self) -> DoubleArray:
        return np.asarray(self.axis_in_mount_frame, dtype=float)

    @property
    def dipole(self) -> DoubleArray:
        """Dipole vector in the mounting frame (A·m²)."""
        return self.dipole_magnitude * self.axis


class FluidParams(BaseModel):
    """
    Lumped capsule-in-fluid parameters.

    Attributes:
        drag_coefficient: C_d in N·s²/m², drag force is C_d·|v|·v
        effective_weight: Signed vertical force combining gravity and buoyancy (N),
            negative means the capsule sinks
        ipm_mass: Capsule mass (kg)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    drag_coefficient: float = Field(default=0.77, ge=0.0)
    effective_weight: float = -0.69e-3
    ipm_mass: float = Field(default=8.1e-3, gt=0.0)

    @property
    def weight_vector(self) -> DoubleArray:
        return np.array([0.0, 0.0, self.effective_weight])


@dataclass(frozen=True)
class Separation:
    """
    Displacement p = p_I - p_E from the EPM centre to the IPM centre.

    Build it with Separation.of(), which enforces the validity floor.
    Leading batch dimensions are allowed; norm and direction keep them.
    """

    p: DoubleArray
    norm: DoubleArray
    direction: DoubleArray

    @classmethod
    def of(cls, p: npt.ArrayLike, min_separation: float) -> "Separation":
        vec = np.asarray(p, dtype=float)
        norm = np.linalg.norm(vec, axis=-1)
        if np.any(~(norm >= min_separation)):
            offending = float(np.nanmin(norm)) if np.any(np.isfinite(norm)) else float("nan")
            raise SeparationError(offending, min_separation)
        return cls(p=vec, norm=norm, direction=vec / norm[..., None])

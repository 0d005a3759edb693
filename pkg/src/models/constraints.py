from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

Vec3 = Tuple[float, float, float]


class BoxLimits(BaseModel):
    """Elementwise lower/upper bounds; every lower entry must be below its upper entry."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: List[float]
    upper: List[float]

    @model_validator(mode="after")
    def _ordered(self) -> "BoxLimits":
        if len(self.lower) != len(self.upper):
            raise ValueError(
                f"lower has {len(self.lower)} entries but upper has {len(self.upper)}"
            )
        for index, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo < hi:
                raise ValueError(f"index {index}: lower={lo} must be < upper={hi}")
        return self


class Obstacle(BaseModel):
    """
    Spherical keep-out region for the IPM centre.

    The radius should already be inflated by the capsule's physical radius;
    margin is the extra safety distance epsilon.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    center: Vec3
    radius: float = Field(gt=0.0)
    margin: float = Field(default=0.0, ge=0.0)


class ConstraintSet(BaseModel):
    """
    Path constraints applied at every timestep (inputs only on running steps).

    Attributes:
        joint_limits: q_min/q_max (rad), one entry per joint
        input_limits: joint velocity bounds (rad/s)
        ipm_velocity_limits: per-axis IPM velocity bounds (m/s)
        epm_min_position: per-axis lower bound on the EPM centre, None disables an axis
        obstacles: spherical obstacles for the IPM centre
        orientation_target: desired field direction at the IPM (normalised on use)
        orientation_every_timestep: False applies the orientation equality only at the
            terminal state
        field_magnitude_min: optional lower bound on |b| at the IPM (T)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    joint_limits: BoxLimits
    input_limits: BoxLimits
    ipm_velocity_limits: BoxLimits
    epm_min_position: Tuple[Optional[float], Optional[float], Optional[float]] = (None, None, None)
    obstacles: List[Obstacle] = Field(default_factory=list)
    orientation_target: Optional[Vec3] = None
    orientation_every_timestep: bool = True
    field_magnitude_min: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _shapes(self) -> "ConstraintSet":
        if len(self.joint_limits.lower) != len(self.input_limits.lower):
            raise ValueError("joint_limits and input_limits must cover the same joints")
        if len(self.ipm_velocity_limits.lower) != 3:
            raise ValueError("ipm_velocity_limits must have exactly 3 entries per side")
        if self.orientation_target is not None:
            if sum(c * c for c in self.orientation_target) <= 0.0:
                raise ValueError("orientation_target must be a nonzero vector")
        return self

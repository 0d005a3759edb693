from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from src.models.kinematics import KinematicChain
from src.models.magnet import FluidParams, MagnetSpec

if TYPE_CHECKING:
    from src.models.scenario import Scenario


@dataclass(frozen=True)
class PlantModel:
    """
    Everything the EPM+IPM transition needs, compiled once per scenario.

    magnetics_enabled=False drops the magnetic force (drag and weight remain);
    the EKF uses it as its fallback when a prediction violates the separation floor.
    """

    chain: KinematicChain
    epm: MagnetSpec
    ipm: MagnetSpec
    fluid: FluidParams
    min_separation: float
    magnetics_enabled: bool = True

    @classmethod
    def from_scenario(cls, scenario: "Scenario") -> "PlantModel":
        return cls(
            chain=scenario.dh_table.to_chain(),
            epm=scenario.epm,
            ipm=scenario.ipm,
            fluid=scenario.fluid,
            min_separation=scenario.min_separation,
        )

    def without_magnetics(self) -> "PlantModel":
        return replace(self, magnetics_enabled=False)

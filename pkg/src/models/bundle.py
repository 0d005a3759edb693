from dataclasses import dataclass, field
from typing import List

from src.config import Config
from src.models.runtime import StudySummary
from src.models.scenario import Scenario
from src.models.trajectory import GainSchedule, SolverReport, Trajectory


@dataclass
class ResultBundle:
    """
    Self-contained result of a plan (and optionally of simulations run from it).

    The resolved scenario and the master seed are enough to regenerate every
    other member bit-exactly.
    """

    scenario: Scenario
    trajectory: Trajectory
    gains: GainSchedule
    report: SolverReport
    seed: int
    tool_version: str = Config.TOOL_VERSION
    summaries: List[StudySummary] = field(default_factory=list)

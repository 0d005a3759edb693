from .magnet import MagnetSpec, FluidParams, Separation
from .kinematics import DhRow, DhTable, KinematicChain, EpmPose
from .constraints import BoxLimits, Obstacle, ConstraintSet
from .plant import PlantModel
from .runtime import NoiseModel, EkfState, RunLog, StudySpec, StatisticsTable, StudySummary
from .scenario import (
    UnitsSpec,
    WorkspaceBox,
    CostWeights,
    HorizonSpec,
    SolverSettings,
    AlSettings,
    EstimationSettings,
    EquilibriumSettings,
    InitialState,
    GoalSpec,
    Scenario,
)
from .trajectory import SolverStatus, Trajectory, GainSchedule, OuterIterationRecord, SolverReport, PlanResult
from .bundle import ResultBundle

__all__ = [
    "MagnetSpec",
    "FluidParams",
    "Separation",
    "DhRow",
    "DhTable",
    "KinematicChain",
    "EpmPose",
    "BoxLimits",
    "Obstacle",
    "ConstraintSet",
    "PlantModel",
    "NoiseModel",
    "EkfState",
    "RunLog",
    "StudySpec",
    "StatisticsTable",
    "StudySummary",
    "UnitsSpec",
    "WorkspaceBox",
    "CostWeights",
    "HorizonSpec",
    "SolverSettings",
    "AlSettings",
    "EstimationSettings",
    "EquilibriumSettings",
    "InitialState",
    "GoalSpec",
    "Scenario",
    "SolverStatus",
    "Trajectory",
    "GainSchedule",
    "OuterIterationRecord",
    "SolverReport",
    "PlanResult",
    "ResultBundle",
]

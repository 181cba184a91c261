"""
Models package initialization
Import all models here for easy access
"""

from app.models.system import TimeDomain, LinearDynamics, StageCost, Gain, StabilityReport
from app.models.polyhedron import Polyhedron
from app.models.realization import ArxModel, IoController, PidParams
from app.models.sdp import SolveStatus, LmiSolution, LpResult
from app.models.matching import Formulation, SPolicy, Objective, MatchOptions, MatchResult, MatchVerification
from app.models.mpc import (
    ConstraintSet, MpcForm, MpcProblem, QuadraticProgram, QpStatus, QpSolution,
    MpcStepResult, DeviationCheck, NmpcResult,
)
from app.models.estimation import (
    NoiseModel, ObserverGain, EstimatorState, MheEstimate, ObserverMatch, HinfDesign, HorizonEstimate,
)
from app.models.sim import (
    PlantKind, Integrator, PlantSpec, ControllerKind, NmpcSpec, ControllerSpec, NoiseSpec,
    PidState, SimTrace, CstrParams, CstrDesign,
)
from app.models.job import JobKind, MpcSettings, MheSettings, JobConfig, JobResult

__all__ = [
    "TimeDomain", "LinearDynamics", "StageCost", "Gain", "StabilityReport",
    "Polyhedron",
    "ArxModel", "IoController", "PidParams",
    "SolveStatus", "LmiSolution", "LpResult",
    "Formulation", "SPolicy", "Objective", "MatchOptions", "MatchResult", "MatchVerification",
    "ConstraintSet", "MpcForm", "MpcProblem", "QuadraticProgram", "QpStatus", "QpSolution",
    "MpcStepResult", "DeviationCheck", "NmpcResult",
    "NoiseModel", "ObserverGain", "EstimatorState", "MheEstimate", "ObserverMatch", "HinfDesign", "HorizonEstimate",
    "PlantKind", "Integrator", "PlantSpec", "ControllerKind", "NmpcSpec", "ControllerSpec", "NoiseSpec",
    "PidState", "SimTrace", "CstrParams", "CstrDesign",
    "JobKind", "MpcSettings", "MheSettings", "JobConfig", "JobResult",
]

"""
Job configuration and result models
"""

import enum
from typing import Any, Dict, Literal, Optional

from pydantic import Field, field_validator, model_validator

from app.models.base import FrozenModel, Matrix, Vector, jsonable
from app.models.matching import MatchOptions
from app.models.mpc import ConstraintSet, MpcForm
from app.models.polyhedron import Polyhedron
from app.models.realization import ArxModel, IoController, PidParams
from app.models.sim import SimTrace
from app.models.system import LinearDynamics


class JobKind(str, enum.Enum):
    MATCH = "match"
    MPI = "mpi"
    MPC_SIM = "mpc_sim"
    MHE_SIM = "mhe_sim"
    REALIZE = "realize"
    EXAMPLE = "example"


class MpcSettings(FrozenModel):
    N: int = Field(default=10, ge=1)
    form: MpcForm = MpcForm.SPARSE
    terminal_set: Literal["mpi", "none"] = "mpi"
    x0: Vector
    steps: int = Field(default=30, ge=1)


class MheSettings(FrozenModel):
    W: Matrix
    V: Matrix
    x0: Vector
    x0_hat: Optional[Vector] = None
    horizon: int = Field(default=10, ge=1)
    steps: int = Field(default=100, ge=1)
    rectified: bool = False


class JobConfig(FrozenModel):
    schema_version: Literal[1]
    job: JobKind
    plant: Optional[LinearDynamics] = None
    gain: Optional[Matrix] = None
    constraints: Optional[ConstraintSet] = None
    match: MatchOptions = Field(default_factory=MatchOptions)
    mpc: Optional[MpcSettings] = None
    mhe: Optional[MheSettings] = None
    arx: Optional[ArxModel] = None
    pid: Optional[PidParams] = None
    io_controller: Optional[IoController] = None
    example: Optional[str] = None
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_sections(self):
        required = {
            JobKind.MATCH: ("plant", "gain"),
            JobKind.MPI: ("plant", "gain", "constraints"),
            JobKind.MPC_SIM: ("plant", "gain", "mpc"),
            JobKind.MHE_SIM: ("plant", "mhe"),
            JobKind.REALIZE: ("arx",),
            JobKind.EXAMPLE: ("example",),
        }[self.job]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.job.value} job is missing: {', '.join(missing)}")
        if self.job == JobKind.REALIZE and (self.pid is None) == (self.io_controller is None):
            raise ValueError("realize job needs exactly one of 'pid' and 'io_controller'")
        return self


class JobResult(FrozenModel):
    """Values are JSON-native (numbers, strings, nested lists); traces go to CSV"""
    job: JobKind
    name: Optional[str] = None
    values: Dict[str, Any] = Field(default_factory=dict)
    traces: Dict[str, SimTrace] = Field(default_factory=dict, exclude=True)
    polyhedra: Dict[str, Polyhedron] = Field(default_factory=dict, exclude=True)

    @field_validator("values", mode="before")
    @classmethod
    def _plain_values(cls, value):
        return jsonable(value)

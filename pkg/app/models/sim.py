"""
Simulation models
"""

import enum
from typing import Any, Callable, Optional

import numpy as np
from pydantic import Field, model_validator

from app.core.exceptions import DimensionMismatch, InvalidOption
from app.models.base import FrozenModel, Matrix, Vector
from app.models.mpc import ConstraintSet, MpcProblem
from app.models.polyhedron import Polyhedron
from app.models.realization import PidParams
from app.models.system import Gain, LinearDynamics, StageCost


class PlantKind(str, enum.Enum):
    LINEAR_DT = "linear_dt"
    LINEAR_CT = "linear_ct"
    NONLINEAR_CT = "nonlinear_ct"
    NONLINEAR_DT = "nonlinear_dt"


class Integrator(str, enum.Enum):
    EXACT_DT = "exact_dt"
    ZOH = "zoh"
    RK4 = "rk4"


class PlantSpec(FrozenModel):
    kind: PlantKind
    ts: float = Field(gt=0)
    sys: Optional[LinearDynamics] = None
    rhs: Optional[Callable[..., Any]] = None  # rhs(x, u, d) -> xdot, or x+ for nonlinear_dt
    output: Optional[Callable[..., Any]] = None  # output(x) -> y
    integrator: Integrator = Integrator.EXACT_DT
    substeps: int = Field(default=1, ge=1)
    disturbance: Optional[Matrix] = None  # one row per step, passed to rhs as d

    @model_validator(mode="after")
    def _check_kind(self):
        linear = self.kind in (PlantKind.LINEAR_DT, PlantKind.LINEAR_CT)
        if linear and self.sys is None:
            raise InvalidOption(f"{self.kind.value} plant needs a LinearDynamics")
        if not linear and self.rhs is None:
            raise InvalidOption(f"{self.kind.value} plant needs a right-hand side")
        if self.kind == PlantKind.NONLINEAR_CT and self.integrator != Integrator.RK4:
            raise InvalidOption("continuous nonlinear plants are integrated with rk4")
        if self.kind == PlantKind.LINEAR_CT and self.integrator == Integrator.EXACT_DT:
            raise InvalidOption("continuous linear plants use zoh or rk4")
        if self.kind == PlantKind.LINEAR_DT and not self.sys.is_discrete:
            raise InvalidOption("linear_dt plant has continuous-time matrices")
        if self.kind == PlantKind.LINEAR_CT and self.sys.is_discrete:
            raise InvalidOption("linear_ct plant has discrete-time matrices")
        return self


class ControllerKind(str, enum.Enum):
    STATIC_GAIN = "static_gain"
    PID_AW = "pid_aw"
    MPC = "mpc"
    NMPC = "nmpc"


class NmpcSpec(FrozenModel):
    f: Callable[..., Any]
    cost: StageCost
    constraints: Optional[ConstraintSet] = None
    terminal_set: Optional[Polyhedron] = None
    N: int = Field(ge=1)
    x_s: Vector
    u_s: Vector
    sqp_iters: Optional[int] = None


class ControllerSpec(FrozenModel):
    kind: ControllerKind
    gain: Optional[Gain] = None
    pid: Optional[PidParams] = None
    mpc: Optional[MpcProblem] = None
    nmpc: Optional[NmpcSpec] = None
    feedforward: Optional[Matrix] = None
    reference: Optional[Matrix] = None  # one row per step; a single row is held constant
    u_lb: Optional[Vector] = None
    u_ub: Optional[Vector] = None
    integral0: float = 0.0

    @model_validator(mode="after")
    def _check_parameters(self):
        required = {
            ControllerKind.STATIC_GAIN: "gain",
            ControllerKind.PID_AW: "pid",
            ControllerKind.MPC: "mpc",
            ControllerKind.NMPC: "nmpc",
        }[self.kind]
        if getattr(self, required) is None:
            raise InvalidOption(f"{self.kind.value} controller needs '{required}'")
        if (self.u_lb is None) != (self.u_ub is None):
            raise InvalidOption("saturation needs both u_lb and u_ub")
        if self.u_lb is not None:
            if self.u_lb.shape != self.u_ub.shape or np.any(self.u_lb >= self.u_ub):
                raise DimensionMismatch("saturation bounds must satisfy u_lb < u_ub elementwise")
        if self.feedforward is not None and self.reference is None:
            raise InvalidOption("feedforward without a reference signal")
        return self

    def reference_at(self, k: int) -> Optional[np.ndarray]:
        if self.reference is None:
            return None
        return self.reference[min(k, self.reference.shape[0] - 1)]


class NoiseSpec(FrozenModel):
    """Process noise G w with w ~ N(0, W) (|w| when rectified), measurement noise v ~ N(0, V)"""
    W: Optional[Matrix] = None
    V: Optional[Matrix] = None
    G: Optional[Matrix] = None
    seed: int = 0
    rectified: bool = False


class PidState(FrozenModel):
    integral: float = 0.0
    prev_error: Optional[float] = None


class SimTrace(FrozenModel):
    t: Vector
    x: Matrix
    u: Matrix
    y: Matrix
    r: Matrix
    x_final: Vector
    seed: Optional[int] = None
    w: Optional[Matrix] = None
    v: Optional[Matrix] = None
    failure_step: Optional[int] = None
    failure: Optional[str] = None

    @property
    def steps(self) -> int:
        return self.t.shape[0]


class CstrParams(FrozenModel):
    V: float = 100.0
    rho: float = 1000.0
    H_AB: float = 5e4
    E_R: float = 8750.0
    K0: float = 7.2e10
    UA: float = 5e4
    q: float = 1.0
    C_Af: float = 1.0
    T_f: float = 350.0
    C_p: Optional[float] = None  # calibrated from the operating point when absent
    arrhenius_sign: int = -1

    # PI controller with anti-windup
    Kp: float = 0.5
    Ki: float = 5.0
    Kaw: float = 1.0
    u_lb: float = 250.0
    u_ub: float = 350.0

    ts: float = Field(default=0.5, gt=0)
    substeps: int = Field(default=10, ge=1)

    # operating point
    T_s: float = 300.0
    u_s: float = 298.59

    @model_validator(mode="after")
    def _check_sign(self):
        if self.arrhenius_sign not in (-1, 1):
            raise InvalidOption("arrhenius_sign must be -1 or +1")
        return self


class CstrDesign(FrozenModel):
    params: CstrParams
    x_s: Vector  # (T, C_A, I)
    u_s: float
    r_s: float
    A: Matrix
    B: Matrix
    B_r: Matrix
    A_PI: Matrix
    B_rPI: Matrix
    K_bar: Matrix
    A_aw: Matrix
    B_aw: Matrix
    dx_r: Vector  # steady-state shift per unit reference change
    du_r: float

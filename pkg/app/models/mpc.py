"""
QP and MPC models
"""

import enum
from typing import List, Optional

import numpy as np
from pydantic import Field, model_validator

from app.core.exceptions import DimensionMismatch
from app.models.base import FrozenModel, Matrix, Vector
from app.models.polyhedron import Polyhedron
from app.models.system import LinearDynamics, StageCost


class ConstraintSet(FrozenModel):
    """Rows C x + D u + e <= 0"""
    C: Matrix
    D: Matrix
    e: Vector

    @model_validator(mode="after")
    def _check_rows(self):
        m = self.C.shape[0]
        if self.D.shape[0] != m or self.e.shape[0] != m:
            raise DimensionMismatch(
                f"constraint blocks disagree on row count: C {self.C.shape}, D {self.D.shape}, e {self.e.shape}"
            )
        return self

    @classmethod
    def empty(cls, n_x: int, n_u: int) -> "ConstraintSet":
        return cls(C=np.zeros((0, n_x)), D=np.zeros((0, n_u)), e=np.zeros(0))

    @classmethod
    def input_box(cls, lb, ub, n_x: int) -> "ConstraintSet":
        lb = np.atleast_1d(np.asarray(lb, dtype=float))
        ub = np.atleast_1d(np.asarray(ub, dtype=float))
        n_u = lb.shape[0]
        eye = np.eye(n_u)
        return cls(C=np.zeros((2 * n_u, n_x)), D=np.vstack([eye, -eye]), e=np.concatenate([-ub, lb]))

    def stack(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(
            C=np.vstack([self.C, other.C]),
            D=np.vstack([self.D, other.D]),
            e=np.concatenate([self.e, other.e]),
        )

    def shifted(self, x_offset, u_offset) -> "ConstraintSet":
        """Same rows written in coordinates (x - x_offset, u - u_offset)"""
        e = self.e + self.C @ np.asarray(x_offset, dtype=float) + self.D @ np.asarray(u_offset, dtype=float)
        return ConstraintSet(C=self.C, D=self.D, e=e)

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    @property
    def n_x(self) -> int:
        return self.C.shape[1]

    @property
    def n_u(self) -> int:
        return self.D.shape[1]

    def violation(self, x, u) -> float:
        if self.n_rows == 0:
            return 0.0
        return float(np.max(self.C @ np.asarray(x) + self.D @ np.asarray(u) + self.e))


class MpcForm(str, enum.Enum):
    SPARSE = "sparse"
    CONDENSED = "condensed"


class MpcProblem(FrozenModel):
    sys: LinearDynamics
    cost: StageCost
    constraints: ConstraintSet
    terminal_set: Polyhedron
    N: int = Field(ge=1)
    form: MpcForm = MpcForm.SPARSE

    @property
    def P(self) -> np.ndarray:
        return self.cost.P


class QuadraticProgram(FrozenModel):
    """min 1/2 z^T G z + c^T z  s.t.  A_in z <= b_in,  A_eq z = b_eq"""
    G: Matrix
    c: Vector
    A_in: Matrix
    b_in: Vector
    A_eq: Matrix
    b_eq: Vector

    @model_validator(mode="after")
    def _check_shapes(self):
        n = self.c.shape[0]
        if self.G.shape != (n, n):
            raise DimensionMismatch(f"Hessian has shape {self.G.shape}, expected {(n, n)}")
        for name, A, b in (("inequality", self.A_in, self.b_in), ("equality", self.A_eq, self.b_eq)):
            if A.shape[0] != b.shape[0] or (A.shape[0] and A.shape[1] != n):
                raise DimensionMismatch(f"{name} block has shape {A.shape} with {b.shape[0]} right-hand sides")
        return self

    @property
    def n_z(self) -> int:
        return self.c.shape[0]


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


class QpSolution(FrozenModel):
    z: Vector
    status: QpStatus
    objective: float
    ineq_multipliers: Vector
    eq_multipliers: Vector
    active_set: List[int] = Field(default_factory=list)
    iterations: int = 0
    kkt_residual: float = 0.0


class MpcStepResult(FrozenModel):
    u0: Vector
    x_traj: Matrix  # rows x_0..x_N
    u_traj: Matrix  # rows u_0..u_{N-1}
    stage_multipliers: Matrix  # N x m
    terminal_multipliers: Vector
    constrained: bool
    objective: float


class DeviationCheck(FrozenModel):
    lhs: float
    rhs: float
    gap: float


class NmpcResult(FrozenModel):
    u0: Vector
    converged: bool
    iterations: int
    step_norm: float
    x_traj: Matrix
    u_traj: Matrix

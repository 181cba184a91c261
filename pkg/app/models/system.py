"""
Plant, cost and gain models
"""

import enum
from typing import Optional

import numpy as np
from pydantic import model_validator

from app.core.config import settings
from app.core.exceptions import AsymmetricMatrix, DimensionMismatch
from app.models.base import FrozenModel, Matrix, is_symmetric


class TimeDomain(str, enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class LinearDynamics(FrozenModel):
    """x+ = Ax + Bu (or xdot = Ax + Bu), optional output y = C_y x + D_y u"""
    A: Matrix
    B: Matrix
    C_y: Optional[Matrix] = None
    D_y: Optional[Matrix] = None
    domain: TimeDomain = TimeDomain.DISCRETE
    ts: Optional[float] = None

    @model_validator(mode="after")
    def _check_dimensions(self):
        n_x = self.A.shape[0]
        if self.A.shape != (n_x, n_x):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n_x:
            raise DimensionMismatch(f"B has {self.B.shape[0]} rows, expected {n_x}")
        if self.C_y is not None:
            if self.C_y.shape[1] != n_x:
                raise DimensionMismatch(f"C_y has {self.C_y.shape[1]} columns, expected {n_x}")
            if self.D_y is not None and self.D_y.shape != (self.C_y.shape[0], self.B.shape[1]):
                raise DimensionMismatch(f"D_y has shape {self.D_y.shape}, expected {(self.C_y.shape[0], self.B.shape[1])}")
        elif self.D_y is not None:
            raise DimensionMismatch("D_y given without C_y")
        if self.ts is not None and self.ts <= 0:
            raise DimensionMismatch(f"ts must be positive, got {self.ts}")
        return self

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return 0 if self.C_y is None else self.C_y.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.domain == TimeDomain.DISCRETE

    def output_feedthrough(self) -> np.ndarray:
        """D_y, or zeros when only C_y is given"""
        if self.C_y is None:
            raise DimensionMismatch("system has no output map")
        if self.D_y is None:
            return np.zeros((self.C_y.shape[0], self.n_u))
        return self.D_y

    def closed_loop(self, K: np.ndarray) -> np.ndarray:
        return self.A - self.B @ np.asarray(K)


class StageCost(FrozenModel):
    """Quadratic stage cost with blocks H = [[Q, S^T], [S, R]] and optional terminal matrix P"""
    Q: Matrix
    R: Matrix
    S: Matrix
    P: Optional[Matrix] = None

    @model_validator(mode="after")
    def _check_blocks(self):
        n_x = self.Q.shape[0]
        n_u = self.R.shape[0]
        if self.Q.shape != (n_x, n_x) or self.R.shape != (n_u, n_u):
            raise DimensionMismatch(f"Q {self.Q.shape} and R {self.R.shape} must be square")
        if self.S.shape != (n_u, n_x):
            raise DimensionMismatch(f"S has shape {self.S.shape}, expected {(n_u, n_x)}")
        for name in ("Q", "R", "P"):
            M = getattr(self, name)
            if M is None:
                continue
            if name == "P" and M.shape != (n_x, n_x):
                raise DimensionMismatch(f"P has shape {M.shape}, expected {(n_x, n_x)}")
            if not is_symmetric(M, settings.SYMMETRY_TOL):
                raise AsymmetricMatrix(f"{name} is not symmetric")
        return self

    @classmethod
    def from_H(cls, H: np.ndarray, n_x: int, P: Optional[np.ndarray] = None) -> "StageCost":
        H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
        return cls(Q=H[:n_x, :n_x], R=H[n_x:, n_x:], S=H[n_x:, :n_x], P=P)

    @property
    def H(self) -> np.ndarray:
        return np.block([[self.Q, self.S.T], [self.S, self.R]])

    @property
    def n_x(self) -> int:
        return self.Q.shape[0]

    @property
    def n_u(self) -> int:
        return self.R.shape[0]

    def scaled(self, sigma: float) -> "StageCost":
        P = None if self.P is None else sigma * self.P
        return StageCost(Q=sigma * self.Q, R=sigma * self.R, S=sigma * self.S, P=P)


class Gain(FrozenModel):
    """State feedback u = -K x"""
    K: Matrix

    @property
    def n_u(self) -> int:
        return self.K.shape[0]

    @property
    def n_x(self) -> int:
        return self.K.shape[1]

    def check_against(self, sys: LinearDynamics) -> None:
        if self.K.shape != (sys.n_u, sys.n_x):
            raise DimensionMismatch(f"gain has shape {self.K.shape}, expected {(sys.n_u, sys.n_x)}")


class StabilityReport(FrozenModel):
    value: float  # spectral radius (discrete) or spectral abscissa (continuous)
    is_stable: bool
    domain: TimeDomain

"""
Input-output model and compensator records
"""

from typing import List, Optional

from pydantic import Field, model_validator

from app.core.exceptions import DimensionMismatch
from app.models.base import FrozenModel, Matrix


class ArxModel(FrozenModel):
    """y_k = sum_i A_i y_{k-i} + sum_j B_j u_{k-j}, strictly causal"""
    A_coeffs: List[Matrix] = Field(min_length=1)
    B_coeffs: List[Matrix] = Field(min_length=1)
    ts: Optional[float] = None

    @model_validator(mode="after")
    def _check_coefficients(self):
        n_y = self.A_coeffs[0].shape[0]
        n_u = self.B_coeffs[0].shape[1]
        for i, Ai in enumerate(self.A_coeffs):
            if Ai.shape != (n_y, n_y):
                raise DimensionMismatch(f"A_coeffs[{i}] has shape {Ai.shape}, expected {(n_y, n_y)}")
        for j, Bj in enumerate(self.B_coeffs):
            if Bj.shape != (n_y, n_u):
                raise DimensionMismatch(f"B_coeffs[{j}] has shape {Bj.shape}, expected {(n_y, n_u)}")
        if self.ts is not None and self.ts <= 0:
            raise DimensionMismatch(f"ts must be positive, got {self.ts}")
        return self

    @property
    def n_y(self) -> int:
        return self.A_coeffs[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.B_coeffs[0].shape[1]

    @property
    def n_a(self) -> int:
        return len(self.A_coeffs)

    @property
    def n_b(self) -> int:
        return len(self.B_coeffs)


class IoController(FrozenModel):
    """u_k = sum_i C_i u_{k-i} + sum_j D_j y_{k-j}, j starting at 0"""
    C_coeffs: List[Matrix] = Field(default_factory=list)
    D_coeffs: List[Matrix] = Field(min_length=1)


class PidParams(FrozenModel):
    Kp: float
    Ki: float = 0.0
    Kd: float = 0.0
    ts: float = Field(gt=0)
    Kaw: Optional[float] = None
    u_lb: Optional[float] = None
    u_ub: Optional[float] = None

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.u_lb is not None and self.u_ub is not None and self.u_lb >= self.u_ub:
            raise DimensionMismatch(f"saturation bounds must satisfy u_lb < u_ub, got {self.u_lb}, {self.u_ub}")
        return self

    @property
    def K_pid(self) -> float:
        return self.Kp + self.Ki * self.ts + self.Kd / self.ts

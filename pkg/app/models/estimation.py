"""
Estimation models
"""

import numpy as np
from pydantic import model_validator

from app.core.config import settings
from app.core.exceptions import AsymmetricMatrix, DimensionMismatch, SingularWeight
from app.models.base import FrozenModel, Matrix, Vector, is_symmetric, min_eig


class NoiseModel(FrozenModel):
    """Covariances of (v, w) with H_est = [[Rv, Svw], [Svw^T, Qw]]"""
    Qw: Matrix
    Rv: Matrix
    Svw: Matrix

    @model_validator(mode="after")
    def _check_blocks(self):
        n_x, n_y = self.Qw.shape[0], self.Rv.shape[0]
        if self.Qw.shape != (n_x, n_x) or self.Rv.shape != (n_y, n_y) or self.Svw.shape != (n_y, n_x):
            raise DimensionMismatch(f"noise blocks Qw {self.Qw.shape}, Rv {self.Rv.shape}, Svw {self.Svw.shape}")
        for name in ("Qw", "Rv"):
            if not is_symmetric(getattr(self, name), settings.SYMMETRY_TOL):
                raise AsymmetricMatrix(f"{name} is not symmetric")
        return self

    @classmethod
    def uncorrelated(cls, Qw, Rv) -> "NoiseModel":
        Qw = np.atleast_2d(np.asarray(Qw, dtype=float))
        Rv = np.atleast_2d(np.asarray(Rv, dtype=float))
        return cls(Qw=Qw, Rv=Rv, Svw=np.zeros((Rv.shape[0], Qw.shape[0])))

    @property
    def H_est(self) -> np.ndarray:
        return np.block([[self.Rv, self.Svw], [self.Svw.T, self.Qw]])

    @property
    def n_x(self) -> int:
        return self.Qw.shape[0]

    @property
    def n_y(self) -> int:
        return self.Rv.shape[0]

    def require_positive_definite(self) -> None:
        if min_eig(self.H_est) <= 0.0:
            raise SingularWeight("noise weight H_est is not positive definite")


class ObserverGain(FrozenModel):
    """x+ = A x - L (C x - y)"""
    L: Matrix

    @property
    def n_x(self) -> int:
        return self.L.shape[0]

    @property
    def n_y(self) -> int:
        return self.L.shape[1]


class EstimatorState(FrozenModel):
    x_hat: Vector
    P_est: Matrix

    @model_validator(mode="after")
    def _check_shape(self):
        n = self.x_hat.shape[0]
        if self.P_est.shape != (n, n):
            raise DimensionMismatch(f"P_est has shape {self.P_est.shape}, expected {(n, n)}")
        return self


class MheEstimate(FrozenModel):
    x_minus_star: Vector
    x_plus_star: Vector


class ObserverMatch(FrozenModel):
    noise: NoiseModel
    P: Matrix
    L_verified: ObserverGain
    gain_error: float
    kappa_H: float


class HinfDesign(FrozenModel):
    L: Matrix
    Sigma: Matrix
    P: Matrix
    gamma_star: float


class HorizonEstimate(FrozenModel):
    x: Matrix  # rows x_0..x_M
    w: Matrix  # rows w_0..w_{M-1}
    objective: float

"""
Matching options and results
"""

import enum
from typing import Optional

from pydantic import model_validator

from app.core.config import settings
from app.core.exceptions import InvalidOption
from app.models.base import FrozenModel, Matrix
from app.models.system import Gain, StageCost


class Formulation(str, enum.Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"
    GAMMA_OPT = "gamma_opt"
    CONSTRUCTIVE = "constructive"


class SPolicy(str, enum.Enum):
    FREE = "free"
    ZERO = "zero"
    L1_MIN = "l1_min"


class Objective(str, enum.Enum):
    MIN_COND_H = "min_cond_H"
    MIN_COND_BLKDIAG_H_P = "min_cond_blkdiag_H_P"


class MatchOptions(FrozenModel):
    formulation: Formulation = Formulation.DIRECT
    gamma: Optional[Matrix] = None
    s_policy: SPolicy = SPolicy.FREE
    objective: Objective = Objective.MIN_COND_H
    tol: float = settings.SDP_TOL

    # constructive path
    Qbar: Optional[Matrix] = None
    Rbar_seed: Optional[Matrix] = None
    inflate_rbar: bool = True

    @model_validator(mode="after")
    def _check_gamma(self):
        if self.formulation == Formulation.INDIRECT and self.gamma is None:
            raise InvalidOption("indirect formulation requires a gamma matrix")
        if self.formulation != Formulation.INDIRECT and self.gamma is not None:
            raise InvalidOption("gamma is only used by the indirect formulation")
        return self


class MatchResult(FrozenModel):
    cost: StageCost
    K_verified: Gain
    beta: float
    kappa_H: float
    kappa_HP: float
    gamma_used: Optional[Matrix] = None
    alpha: Optional[float] = None
    formulation: Formulation
    gain_error: float
    rbar_inflated: bool = False
    max_residual: float = 0.0

    @property
    def P(self):
        return self.cost.P

    @property
    def H(self):
        return self.cost.H


class MatchVerification(FrozenModel):
    gain_error: float
    stabilizing: bool

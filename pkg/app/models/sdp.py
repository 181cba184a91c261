"""
Conic solve results
"""

import enum
from typing import Dict, Optional

from pydantic import Field

from app.models.base import FrozenModel, Matrix, Vector


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class LmiSolution(FrozenModel):
    status: SolveStatus
    values: Dict[str, Matrix] = Field(default_factory=dict)
    objective_value: Optional[float] = None
    max_residual: float = 0.0
    solver: Optional[str] = None

    def value(self, name: str):
        return self.values[name]

    def scalar(self, name: str) -> float:
        return float(self.values[name][0, 0])


class LpResult(FrozenModel):
    status: SolveStatus
    x: Optional[Vector] = None
    objective: Optional[float] = None

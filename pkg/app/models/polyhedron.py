"""
Halfspace polyhedron {x | F x <= g}
"""

import numpy as np
from pydantic import model_validator

from app.core.exceptions import DimensionMismatch, EmptyPolyhedron
from app.models.base import FrozenModel, Matrix, Vector


class Polyhedron(FrozenModel):
    F: Matrix
    g: Vector

    @model_validator(mode="after")
    def _check_rows(self):
        if self.F.shape[0] != self.g.shape[0]:
            raise DimensionMismatch(f"F has {self.F.shape[0]} rows but g has {self.g.shape[0]} entries")
        if self.F.shape[0] and np.any(np.max(np.abs(self.F), axis=1) == 0.0):
            raise DimensionMismatch("polyhedron rows must be nonzero, use Polyhedron.from_rows")
        return self

    @classmethod
    def from_rows(cls, F, g) -> "Polyhedron":
        """Scale rows to unit infinity norm; drop trivially satisfied zero rows"""
        F = np.array(F, dtype=float)
        g = np.array(g, dtype=float).reshape(-1)
        if F.ndim < 2:
            F = F.reshape(1, -1)
        if F.shape[0] != g.shape[0]:
            raise DimensionMismatch(f"F has {F.shape[0]} rows but g has {g.shape[0]} entries")
        norms = np.max(np.abs(F), axis=1)
        zero = norms == 0.0
        if np.any(g[zero] < 0.0):
            raise EmptyPolyhedron("a zero row with negative right-hand side is never satisfied")
        keep = ~zero
        F = F[keep] / norms[keep, None]
        g = g[keep] / norms[keep]
        return cls(F=F, g=g)

    @property
    def n_x(self) -> int:
        return self.F.shape[1]

    @property
    def n_rows(self) -> int:
        return self.F.shape[0]

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if other.n_x != self.n_x:
            raise DimensionMismatch("cannot intersect polyhedra of different dimension")
        return Polyhedron(F=np.vstack([self.F, other.F]), g=np.concatenate([self.g, other.g]))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n_x:
            raise DimensionMismatch(f"point has dimension {x.shape[0]}, polyhedron {self.n_x}")
        if self.n_rows == 0:
            return True
        return bool(np.max(self.F @ x - self.g) <= tol)

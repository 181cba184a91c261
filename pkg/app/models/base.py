"""
Shared building blocks for the value types
Matrices and vectors are numpy float arrays, copied on construction and made read-only
"""

import enum
from typing import Annotated, Any

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer


def as_matrix(value: Any) -> np.ndarray:
    """Coerce scalars, 1-D rows and nested lists to a read-only 2-D float array"""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim > 2:
        raise ValueError(f"expected a matrix, got an array with {arr.ndim} dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    arr.setflags(write=False)
    return arr


def as_vector(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    arr.setflags(write=False)
    return arr


def _to_nested_list(arr: np.ndarray) -> list:
    return np.asarray(arr, dtype=float).tolist()


Matrix = Annotated[
    np.ndarray,
    BeforeValidator(as_matrix),
    PlainSerializer(_to_nested_list, return_type=list),
]

Vector = Annotated[
    np.ndarray,
    BeforeValidator(as_vector),
    PlainSerializer(_to_nested_list, return_type=list),
]


class FrozenModel(BaseModel):
    """Immutable value type holding numpy data"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")


def symmetrize(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def is_symmetric(M: np.ndarray, tol: float) -> bool:
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        return False
    scale = 1.0 + np.linalg.norm(M)
    return bool(np.linalg.norm(M - M.T) <= tol * scale)


def min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def cond_spd(M: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(symmetrize(M))
    if eig[0] <= 0.0:
        return float("inf")
    return float(eig[-1] / eig[0])


def jsonable(value: Any) -> Any:
    """Nested lists and plain numbers for arrays, models and enums"""
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value

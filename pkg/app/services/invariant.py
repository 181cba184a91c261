"""
Polyhedral sets
Closed-loop constraint rows, redundancy removal and the maximal positive invariant set
"""

import logging
from typing import Optional

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    DimensionMismatch,
    EmptyPolyhedron,
    LpInfeasible,
    LpUnbounded,
    NotFinitelyDetermined,
    NotSchurStable,
)
from app.models.polyhedron import Polyhedron
from app.services.numerics import spectral_radius
from app.services.sdp import solve_lp

logger = logging.getLogger(__name__)


def closed_loop_constraints(C, D, e, K_hat) -> Polyhedron:
    """Rows (C - D K) x <= -e of C x + D u + e <= 0 under u = -K x"""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    K = np.atleast_2d(np.asarray(K_hat, dtype=float))
    e = np.asarray(e, dtype=float).reshape(-1)
    if D.shape[0] != C.shape[0] or D.shape[1] != K.shape[0] or K.shape[1] != C.shape[1] or e.shape[0] != C.shape[0]:
        raise DimensionMismatch(f"C {C.shape}, D {D.shape}, e {e.shape}, K {K.shape} are inconsistent")
    return Polyhedron.from_rows(C - D @ K, -e)


def contains(poly: Polyhedron, x, tol: float = 1e-9) -> bool:
    return poly.contains(x, tol)


def is_empty(poly: Polyhedron) -> bool:
    if poly.n_rows == 0:
        return False
    try:
        solve_lp(np.zeros(poly.n_x), poly.F, poly.g)
    except LpInfeasible:
        return True
    return False


def support(poly: Polyhedron, direction) -> Optional[float]:
    """max direction^T x over the set; None when unbounded"""
    try:
        return solve_lp(direction, poly.F, poly.g, maximize=True).objective
    except LpUnbounded:
        return None
    except LpInfeasible:
        # HiGHS may report a dual infeasible maximization as infeasible
        if is_empty(poly):
            logger.error("Support query on an empty polyhedron")
            raise EmptyPolyhedron()
        return None


def remove_redundant(poly: Polyhedron, tol: Optional[float] = None) -> Polyhedron:
    tol = settings.REDUNDANCY_TOL if tol is None else tol
    if is_empty(poly):
        logger.error("Redundancy removal on an empty polyhedron")
        raise EmptyPolyhedron()

    keep = list(range(poly.n_rows))
    for i in range(poly.n_rows):
        others = [j for j in keep if j != i]
        if not others:
            continue
        bound = support(Polyhedron(F=poly.F[others], g=poly.g[others]), poly.F[i])
        if bound is not None and bound <= poly.g[i] + tol:
            keep = others
    if len(keep) < poly.n_rows:
        logger.debug(f"Removed {poly.n_rows - len(keep)} redundant rows")
    return Polyhedron(F=poly.F[keep], g=poly.g[keep])


def compute_mpi(A_K, constraints: Polyhedron, max_iter: Optional[int] = None) -> Polyhedron:
    """
    Maximal positive invariant set of x+ = A_K x inside the constraint set

    Rows F A_K^t x <= g are appended while some of them still cuts the current
    set; the set is certified once every propagated row is redundant.
    """
    A_K = np.atleast_2d(np.asarray(A_K, dtype=float))
    max_iter = settings.MPI_MAX_ITER if max_iter is None else max_iter
    if A_K.shape != (constraints.n_x, constraints.n_x):
        raise DimensionMismatch(f"A_K has shape {A_K.shape}, constraints live in dimension {constraints.n_x}")
    rho = spectral_radius(A_K)
    if rho >= 1.0 - settings.STAB_EPS:
        logger.error(f"MPI requested for a non-Schur closed loop (spectral radius {rho:.6g})")
        raise NotSchurStable(f"closed loop has spectral radius {rho:.6g}")
    if constraints.n_rows == 0:
        return constraints
    if is_empty(constraints):
        raise EmptyPolyhedron("constraint set is empty")

    omega = constraints
    power = np.eye(A_K.shape[0])
    for t in range(1, max_iter + 1):
        power = power @ A_K
        J = constraints.F @ power
        cutting = []
        for i in range(constraints.n_rows):
            scale = np.max(np.abs(J[i]))
            if scale == 0.0:
                continue
            bound = support(omega, J[i] / scale)
            if bound is None or bound > constraints.g[i] / scale + settings.REDUNDANCY_TOL:
                cutting.append(i)
        if not cutting:
            logger.info(f"MPI set finitely determined after {t - 1} steps")
            return remove_redundant(omega)
        omega = omega.intersect(Polyhedron.from_rows(J[cutting], constraints.g[cutting]))

    logger.error(f"MPI iteration not finitely determined within {max_iter} steps")
    raise NotFinitelyDetermined(f"no fixed point within {max_iter} steps")

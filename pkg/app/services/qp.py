"""
Dense primal active-set QP solver
Strictly convex problems only; range-space steps with Cholesky factors of the Hessian
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.config import settings
from app.core.exceptions import LpInfeasible, NotPositiveDefinite, NumericalFailure, QpInfeasible
from app.models.mpc import QpSolution, QpStatus, QuadraticProgram
from app.services.numerics import matrix_rank
from app.services.sdp import solve_lp

logger = logging.getLogger(__name__)


class _RangeSpace:
    """Equality-constrained minimizers with a fixed Hessian factor"""

    def __init__(self, G: np.ndarray):
        try:
            self._factor = cho_factor(G)
        except LinAlgError as e:
            logger.error(f"QP Hessian is not positive definite: {e}")
            raise NotPositiveDefinite("QP Hessian is not positive definite")

    def solve(self, c: np.ndarray, A_w: np.ndarray, b_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """argmin 1/2 z^T G z + c^T z  s.t.  A_w z = b_w, with the multipliers of the rows"""
        Ginv_c = cho_solve(self._factor, c)
        if A_w.shape[0] == 0:
            return -Ginv_c, np.zeros(0)
        Ginv_At = cho_solve(self._factor, A_w.T)
        S = A_w @ Ginv_At
        rhs = -(A_w @ Ginv_c + b_w)
        try:
            lam = cho_solve(cho_factor(S), rhs)
        except LinAlgError:
            lam, *_ = np.linalg.lstsq(S, rhs, rcond=None)
        z = -(Ginv_c + Ginv_At @ lam)
        return z, lam


def _initial_point(qp: QuadraticProgram, space: _RangeSpace, tol: float) -> np.ndarray:
    z, _ = space.solve(qp.c, qp.A_eq, qp.b_eq)
    if qp.A_in.shape[0] == 0 or np.all(qp.A_in @ z - qp.b_in <= tol):
        return z
    try:
        phase1 = solve_lp(
            np.zeros(qp.n_z), qp.A_in, qp.b_in,
            A_eq=qp.A_eq if qp.A_eq.shape[0] else None,
            b_eq=qp.b_eq if qp.A_eq.shape[0] else None,
        )
    except LpInfeasible:
        logger.info("QP phase 1 found no feasible point")
        raise QpInfeasible()
    return np.asarray(phase1.x, dtype=float)


def _independent_rows(qp: QuadraticProgram, candidates: List[int]) -> List[int]:
    working: List[int] = []
    rank = matrix_rank(qp.A_eq) if qp.A_eq.shape[0] else 0
    for i in candidates:
        rows = np.vstack([qp.A_eq, qp.A_in[working + [i]]])
        r = matrix_rank(rows)
        if r > rank:
            working.append(i)
            rank = r
    return working


def kkt_residual(qp: QuadraticProgram, z: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> float:
    stationarity = qp.G @ z + qp.c + qp.A_in.T @ mu + qp.A_eq.T @ nu
    parts = [np.max(np.abs(stationarity)) if stationarity.size else 0.0]
    if qp.A_in.shape[0]:
        slack = qp.A_in @ z - qp.b_in
        parts += [np.max(slack, initial=0.0), np.max(-mu, initial=0.0), np.max(np.abs(mu * slack))]
    if qp.A_eq.shape[0]:
        parts.append(np.max(np.abs(qp.A_eq @ z - qp.b_eq)))
    return float(max(parts))


def solve_qp(qp: QuadraticProgram, tol: Optional[float] = None) -> QpSolution:
    """
    Primal active-set iteration

    The working set starts from an independent subset of the rows active at the
    initial point. Each iteration solves the equality-constrained subproblem; a
    zero step with nonnegative multipliers is optimal, otherwise the most negative
    multiplier is released. Blocking rows and released rows are both chosen at
    the lowest index on ties, so the result is deterministic.
    """
    tol = settings.QP_TOL if tol is None else tol
    space = _RangeSpace(qp.G)
    z = _initial_point(qp, space, max(tol, 1e-9))

    m_in = qp.A_in.shape[0]
    n_eq = qp.A_eq.shape[0]
    active = [i for i in range(m_in) if abs(qp.A_in[i] @ z - qp.b_in[i]) <= settings.ACTIVE_TOL]
    working = _independent_rows(qp, active)

    for iteration in range(1, settings.QP_MAX_ITER + 1):
        A_w = np.vstack([qp.A_eq, qp.A_in[working]]) if working else qp.A_eq
        b_w = np.concatenate([qp.b_eq, qp.b_in[working]]) if working else qp.b_eq
        z_eqp, lam = space.solve(qp.c, A_w, b_w)
        p = z_eqp - z

        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(z)):
            lam_in = lam[n_eq:]
            if lam_in.size == 0 or np.min(lam_in) >= -tol:
                z = z_eqp
                mu = np.zeros(m_in)
                mu[working] = np.maximum(lam_in, 0.0)
                nu = lam[:n_eq]
                residual = kkt_residual(qp, z, mu, nu)
                scale = 1.0 + np.max(np.abs(qp.c), initial=0.0) + np.max(np.abs(qp.G))
                if residual > 1e-6 * scale:
                    logger.error(f"QP terminated with KKT residual {residual:.2e}")
                    raise NumericalFailure(f"QP KKT residual {residual:.2e} above tolerance")
                return QpSolution(
                    z=z,
                    status=QpStatus.OPTIMAL,
                    objective=float(0.5 * z @ qp.G @ z + qp.c @ z),
                    ineq_multipliers=mu,
                    eq_multipliers=nu,
                    active_set=sorted(working),
                    iterations=iteration,
                    kkt_residual=residual,
                )
            working.pop(int(np.argmin(lam_in)))
            continue

        alpha = 1.0
        blocking = None
        for i in range(m_in):
            if i in working:
                continue
            slope = qp.A_in[i] @ p
            if slope <= tol:
                continue
            ratio = (qp.b_in[i] - qp.A_in[i] @ z) / slope
            if ratio < alpha:
                alpha = max(ratio, 0.0)
                blocking = i
        z = z + alpha * p
        if blocking is not None:
            working = sorted(working + [blocking])

    logger.error(f"QP active-set iteration hit {settings.QP_MAX_ITER} iterations")
    raise NumericalFailure("QP active-set iteration did not terminate")

"""
Dense linear-algebra routines
Lyapunov, DARE and CARE solvers, zero-order-hold discretization and stability tests
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg as sla
from scipy.signal import place_poles

from app.core.config import settings
from app.core.exceptions import (
    AppException,
    DimensionMismatch,
    EigenFailure,
    NoConvergence,
    NoStabilizingSolution,
    NotHurwitzStable,
    NotSchurStable,
    NotStabilizable,
)
from app.models.base import symmetrize
from app.models.system import Gain, LinearDynamics, StabilityReport, StageCost, TimeDomain

logger = logging.getLogger(__name__)


def eigenvalues(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as e:
        logger.error(f"Eigenvalue computation failed: {e}")
        raise EigenFailure(f"eigenvalue computation failed: {e}")


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(eigenvalues(A))))


def spectral_abscissa(A: np.ndarray) -> float:
    return float(np.max(eigenvalues(A).real))


def stability_report(A: np.ndarray, domain: TimeDomain = TimeDomain.DISCRETE) -> StabilityReport:
    if domain == TimeDomain.DISCRETE:
        value = spectral_radius(A)
        stable = value < 1.0 - settings.STAB_EPS
    else:
        value = spectral_abscissa(A)
        stable = value < -settings.STAB_EPS
    return StabilityReport(value=value, is_stable=stable, domain=domain)


def is_schur(A: np.ndarray) -> bool:
    return stability_report(A, TimeDomain.DISCRETE).is_stable


def is_hurwitz(A: np.ndarray) -> bool:
    return stability_report(A, TimeDomain.CONTINUOUS).is_stable


def is_stable(A: np.ndarray, domain: TimeDomain) -> bool:
    return stability_report(A, domain).is_stable


def matrix_rank(M: np.ndarray) -> int:
    """Rank from singular values with a tolerance relative to the largest one"""
    s = np.linalg.svd(np.asarray(M), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > settings.RANK_TOL * s[0]))


def is_stabilizable(sys: LinearDynamics) -> bool:
    """PBH test on every mode that is not strictly stable"""
    n_x = sys.n_x
    for lam in eigenvalues(sys.A):
        if sys.is_discrete:
            marginal = abs(lam) >= 1.0 - settings.STAB_EPS
        else:
            marginal = lam.real >= -settings.STAB_EPS
        if not marginal:
            continue
        pbh = np.hstack([lam * np.eye(n_x) - sys.A, sys.B.astype(complex)])
        if matrix_rank(pbh) < n_x:
            return False
    return True


def is_detectable(A: np.ndarray, C: np.ndarray, domain: TimeDomain = TimeDomain.DISCRETE) -> bool:
    return is_stabilizable(LinearDynamics(A=np.asarray(A).T, B=np.asarray(C).T, domain=domain))


def solve_lyapunov_discrete(A_K: np.ndarray, Qbar: np.ndarray) -> np.ndarray:
    """Pbar with Qbar + A_K^T Pbar A_K - Pbar = 0"""
    A_K = np.asarray(A_K, dtype=float)
    Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
    if Qbar.shape != A_K.shape:
        raise DimensionMismatch(f"Qbar has shape {Qbar.shape}, expected {A_K.shape}")
    if not is_schur(A_K):
        raise NotSchurStable(f"spectral radius {spectral_radius(A_K):.6g} is not below 1")
    try:
        Pbar = symmetrize(sla.solve_discrete_lyapunov(A_K.T, Qbar))
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Discrete Lyapunov solve failed: {e}")
        raise NoConvergence(f"discrete Lyapunov solve failed: {e}")
    defect = lambda P: Qbar + A_K.T @ P @ A_K - P
    bound = settings.LYAP_RESIDUAL_TOL * (1.0 + np.linalg.norm(Qbar))
    if np.linalg.norm(defect(Pbar)) > bound:
        # one refinement step on the residual equation
        Pbar = symmetrize(Pbar + sla.solve_discrete_lyapunov(A_K.T, defect(Pbar)))
    if np.linalg.norm(defect(Pbar)) > bound:
        raise NoConvergence(f"discrete Lyapunov residual {np.linalg.norm(defect(Pbar)):.3e} exceeds bound")
    return Pbar


def solve_lyapunov_continuous(A_K: np.ndarray, Qbar: np.ndarray) -> np.ndarray:
    """Pbar with Qbar + A_K^T Pbar + Pbar A_K = 0"""
    A_K = np.asarray(A_K, dtype=float)
    Qbar = np.atleast_2d(np.asarray(Qbar, dtype=float))
    if Qbar.shape != A_K.shape:
        raise DimensionMismatch(f"Qbar has shape {Qbar.shape}, expected {A_K.shape}")
    if not is_hurwitz(A_K):
        raise NotHurwitzStable(f"spectral abscissa {spectral_abscissa(A_K):.6g} is not negative")
    try:
        Pbar = symmetrize(sla.solve_continuous_lyapunov(A_K.T, -Qbar))
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Continuous Lyapunov solve failed: {e}")
        raise NoConvergence(f"continuous Lyapunov solve failed: {e}")
    defect = lambda P: Qbar + A_K.T @ P + P @ A_K
    bound = settings.LYAP_RESIDUAL_TOL * (1.0 + np.linalg.norm(Qbar))
    if np.linalg.norm(defect(Pbar)) > bound:
        Pbar = symmetrize(Pbar + sla.solve_continuous_lyapunov(A_K.T, -defect(Pbar)))
    if np.linalg.norm(defect(Pbar)) > bound:
        raise NoConvergence(f"continuous Lyapunov residual {np.linalg.norm(defect(Pbar)):.3e} exceeds bound")
    return Pbar


# Riccati equations

def dare_gain(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> np.ndarray:
    """K = (R + B^T P B)^-1 (S + B^T P A)"""
    A, B = sys.A, sys.B
    return np.linalg.solve(cost.R + B.T @ P @ B, cost.S + B.T @ P @ A)


def care_gain(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> np.ndarray:
    """K = R^-1 (B^T P + S)"""
    return np.linalg.solve(cost.R, sys.B.T @ P + cost.S)


def dare_residual(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> float:
    A, B = sys.A, sys.B
    K = dare_gain(sys, cost, P)
    res = A.T @ P @ A - P + cost.Q - (cost.S.T + A.T @ P @ B) @ K
    return float(np.linalg.norm(res) / (1.0 + np.linalg.norm(P)))


def care_residual(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> float:
    A, B = sys.A, sys.B
    K = care_gain(sys, cost, P)
    res = A.T @ P + P @ A + cost.Q - (P @ B + cost.S.T) @ K
    return float(np.linalg.norm(res) / (1.0 + np.linalg.norm(P)))


def _closed_loop_weight(cost: StageCost, K: np.ndarray) -> np.ndarray:
    """[I; -K]^T H [I; -K]"""
    return symmetrize(cost.Q - cost.S.T @ K - K.T @ cost.S + K.T @ cost.R @ K)


def _accept_dare(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> bool:
    try:
        K = dare_gain(sys, cost, P)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(K)):
        return False
    return is_schur(sys.closed_loop(K)) and dare_residual(sys, cost, P) <= settings.RICCATI_RESIDUAL_TOL


def _hewer_step(sys: LinearDynamics, cost: StageCost, P: np.ndarray) -> np.ndarray:
    K = dare_gain(sys, cost, P)
    return solve_lyapunov_discrete(sys.closed_loop(K), _closed_loop_weight(cost, K))


def _dare_value_iteration(sys: LinearDynamics, cost: StageCost) -> np.ndarray:
    A, B = sys.A, sys.B
    P = np.eye(sys.n_x)
    for iteration in range(settings.DARE_MAX_ITER):
        try:
            K = dare_gain(sys, cost, P)
        except np.linalg.LinAlgError as e:
            raise NoStabilizingSolution(f"R + B^T P B became singular during value iteration: {e}")
        P_next = symmetrize(A.T @ P @ A + cost.Q - (cost.S.T + A.T @ P @ B) @ K)
        if not np.all(np.isfinite(P_next)):
            raise NoStabilizingSolution("Riccati value iteration diverged")
        change = np.linalg.norm(P_next - P)
        P = P_next
        if change <= settings.DARE_TOL * (1.0 + np.linalg.norm(P)):
            logger.debug(f"DARE value iteration converged after {iteration + 1} iterations")
            return P
    raise NoStabilizingSolution(f"Riccati value iteration did not converge in {settings.DARE_MAX_ITER} iterations")


def solve_dare(sys: LinearDynamics, cost: StageCost) -> Tuple[np.ndarray, Gain]:
    """Stabilizing solution of the discrete algebraic Riccati equation with cross term S"""
    if cost.n_x != sys.n_x or cost.n_u != sys.n_u:
        raise DimensionMismatch("cost blocks do not match the system dimensions")
    if not is_stabilizable(sys):
        raise NotStabilizable()

    P = None
    try:
        candidate = symmetrize(sla.solve_discrete_are(sys.A, sys.B, cost.Q, cost.R, s=cost.S.T))
        if _accept_dare(sys, cost, candidate):
            P = candidate
        else:
            logger.debug("scipy DARE solution rejected, falling back to value iteration")
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.debug(f"scipy DARE solve failed ({e}), falling back to value iteration")

    if P is None:
        P = _dare_value_iteration(sys, cost)
        try:
            P = _hewer_step(sys, cost, P)
        except AppException as e:
            raise NoStabilizingSolution(f"Newton refinement failed: {e.detail}")
        if not _accept_dare(sys, cost, P):
            raise NoStabilizingSolution("Riccati iteration did not reach a stabilizing solution")

    K = dare_gain(sys, cost, P)
    return P, Gain(K=K)


def _care_newton(sys: LinearDynamics, cost: StageCost, K: np.ndarray, max_iter: int = 100) -> np.ndarray:
    P = None
    for _ in range(max_iter):
        P_next = solve_lyapunov_continuous(sys.closed_loop(K), _closed_loop_weight(cost, K))
        K = care_gain(sys, cost, P_next)
        if P is not None and np.linalg.norm(P_next - P) <= settings.DARE_TOL * (1.0 + np.linalg.norm(P_next)):
            return P_next
        P = P_next
    return P


def _stabilizing_seed(sys: LinearDynamics) -> np.ndarray:
    """Gain placing the closed-loop poles left of the open-loop spectrum"""
    shift = 1.0 + max(0.0, spectral_abscissa(sys.A))
    poles = -shift - 0.1 * np.arange(sys.n_x)
    try:
        return place_poles(sys.A, sys.B, poles).gain_matrix
    except ValueError as e:
        logger.error(f"Pole placement failed: {e}")
        raise NoStabilizingSolution(f"could not construct a stabilizing seed gain: {e}")


def solve_care(sys: LinearDynamics, cost: StageCost) -> Tuple[np.ndarray, Gain]:
    """Stabilizing solution of the continuous algebraic Riccati equation with cross term S"""
    if cost.n_x != sys.n_x or cost.n_u != sys.n_u:
        raise DimensionMismatch("cost blocks do not match the system dimensions")
    if not is_stabilizable(sys):
        raise NotStabilizable()

    P = None
    try:
        candidate = symmetrize(sla.solve_continuous_are(sys.A, sys.B, cost.Q, cost.R, s=cost.S.T))
        K = care_gain(sys, cost, candidate)
        if is_hurwitz(sys.closed_loop(K)):
            P = solve_lyapunov_continuous(sys.closed_loop(K), _closed_loop_weight(cost, K))
    except (np.linalg.LinAlgError, ValueError, AppException) as e:
        logger.debug(f"scipy CARE solve failed ({e}), falling back to Newton-Kleinman")

    if P is None or care_residual(sys, cost, P) > settings.RICCATI_RESIDUAL_TOL:
        try:
            P = _care_newton(sys, cost, _stabilizing_seed(sys))
        except AppException as e:
            raise NoStabilizingSolution(f"Newton-Kleinman iteration failed: {e.detail}")

    K = care_gain(sys, cost, P)
    if not is_hurwitz(sys.closed_loop(K)) or care_residual(sys, cost, P) > settings.RICCATI_RESIDUAL_TOL:
        raise NoStabilizingSolution("CARE iteration did not reach a stabilizing solution")
    return P, Gain(K=K)


def solve_riccati(sys: LinearDynamics, cost: StageCost) -> Tuple[np.ndarray, Gain]:
    if sys.is_discrete:
        return solve_dare(sys, cost)
    return solve_care(sys, cost)


def discretize_zoh(sys: LinearDynamics, ts: float) -> LinearDynamics:
    """Exact discretization under a zero-order hold via the augmented matrix exponential"""
    if ts <= 0:
        raise DimensionMismatch(f"ts must be positive, got {ts}")
    if sys.is_discrete:
        raise DimensionMismatch("system is already discrete")
    n_x, n_u = sys.n_x, sys.n_u
    M = np.zeros((n_x + n_u, n_x + n_u))
    M[:n_x, :n_x] = sys.A
    M[:n_x, n_x:] = sys.B
    E = sla.expm(M * ts)
    return LinearDynamics(
        A=E[:n_x, :n_x],
        B=E[:n_x, n_x:],
        C_y=sys.C_y,
        D_y=sys.D_y,
        domain=TimeDomain.DISCRETE,
        ts=ts,
    )


# Linearization

def finite_difference_jacobian(f: Callable[[np.ndarray], np.ndarray], x, step: Optional[float] = None) -> np.ndarray:
    """Central differences with step h_i = step * (1 + |x_i|)"""
    step = settings.FD_STEP if step is None else step
    x = np.asarray(x, dtype=float).reshape(-1)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        h = step * (1.0 + abs(x[i]))
        dx = np.zeros_like(x)
        dx[i] = h
        f_plus = np.atleast_1d(np.asarray(f(x + dx), dtype=float))
        f_minus = np.atleast_1d(np.asarray(f(x - dx), dtype=float))
        J[:, i] = (f_plus - f_minus) / (2.0 * h)
    return J


def linearize(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x_s,
    u_s,
    h: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
):
    """Jacobians (A, B) of f and, when h is given, (C, D, e) of the constraint map h(x, u) <= 0"""
    x_s = np.asarray(x_s, dtype=float).reshape(-1)
    u_s = np.asarray(u_s, dtype=float).reshape(-1)
    n_x = x_s.size
    z_s = np.concatenate([x_s, u_s])

    J = finite_difference_jacobian(lambda z: f(z[:n_x], z[n_x:]), z_s)
    A, B = J[:, :n_x], J[:, n_x:]
    if h is None:
        return A, B, None, None, None
    Jh = finite_difference_jacobian(lambda z: h(z[:n_x], z[n_x:]), z_s)
    e = np.atleast_1d(np.asarray(h(x_s, u_s), dtype=float))
    return A, B, Jh[:, :n_x], Jh[:, n_x:], e

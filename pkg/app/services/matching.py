"""
Controller matching
Positive-definite stage costs whose LQR law reproduces a prescribed feedback gain,
via the direct, indirect and Gamma-optimized SDPs or the constructive Lyapunov path
"""

import logging
from typing import Optional

import cvxpy as cp
import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    DestabilizingGain,
    DimensionMismatch,
    GammaNotSPD,
    InvalidOption,
    MatchVerificationFailed,
    NotStabilizable,
    NumericalFailure,
    ProvisoViolated,
    RbarTooSmall,
    SdpInfeasible,
    SPolicyInfeasible,
)
from app.models.base import cond_spd, is_symmetric, min_eig, symmetrize
from app.models.matching import Formulation, MatchOptions, MatchResult, MatchVerification, Objective, SPolicy
from app.models.sdp import SolveStatus
from app.models.system import Gain, LinearDynamics, StageCost
from app.services import numerics
from app.services.sdp import LmiProblem, solve_lmi

logger = logging.getLogger(__name__)


def _gain_matrix(sys: LinearDynamics, K_hat) -> np.ndarray:
    gain = K_hat if isinstance(K_hat, Gain) else Gain(K=K_hat)
    gain.check_against(sys)
    return np.asarray(gain.K)


def _require_stabilizing(sys: LinearDynamics, K: np.ndarray) -> None:
    report = numerics.stability_report(sys.closed_loop(K), sys.domain)
    if not report.is_stable:
        logger.error(f"Prescribed gain is destabilizing (closed-loop measure {report.value:.6g})")
        raise DestabilizingGain(
            f"closed loop A - B K_hat is not stable (measure {report.value:.6g}); "
            "the stabilizing LQR law of any cost would differ from K_hat"
        )
    if not numerics.is_stabilizable(sys):
        raise NotStabilizable()


def _check_gamma(gamma, n_u: int) -> np.ndarray:
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if gamma.shape != (n_u, n_u):
        raise DimensionMismatch(f"gamma has shape {gamma.shape}, expected {(n_u, n_u)}")
    if not is_symmetric(gamma, settings.SYMMETRY_TOL) or min_eig(gamma) <= 0.0:
        raise GammaNotSPD()
    return symmetrize(gamma)


def _sup_norm(M: np.ndarray) -> float:
    return float(np.max(np.abs(M))) if np.size(M) else 0.0


# Cost building blocks

def gain_weight(K: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """H_Gamma = [[K^T G K, K^T G], [G K, G]]: weight on (u + K x)"""
    return np.block([[K.T @ gamma @ K, K.T @ gamma], [gamma @ K, gamma]])


def telescoping_weight(sys: LinearDynamics, P: np.ndarray) -> np.ndarray:
    """H_P of the identity x^T P x - x+^T P x+ (discrete) or -d/dt x^T P x (continuous)"""
    A, B = sys.A, sys.B
    if sys.is_discrete:
        return np.block([[P - A.T @ P @ A, -A.T @ P @ B], [-B.T @ P @ A, -B.T @ P @ B]])
    return -np.block([[A.T @ P + P @ A, P @ B], [B.T @ P, np.zeros((sys.n_u, sys.n_u))]])


def _telescoping_expr(sys: LinearDynamics, P):
    A, B = sys.A, sys.B
    if sys.is_discrete:
        return cp.bmat([[P - A.T @ P @ A, -A.T @ P @ B], [-B.T @ P @ A, -B.T @ P @ B]])
    return -cp.bmat([[A.T @ P + P @ A, P @ B], [B.T @ P, np.zeros((sys.n_u, sys.n_u))]])


def _gain_weight_expr(K: np.ndarray, gamma):
    return cp.bmat([[K.T @ gamma @ K, K.T @ gamma], [gamma @ K, gamma]])


def indefinite_cost(sys: LinearDynamics, K_hat, gamma, P=None) -> StageCost:
    """Cost H_Gamma + H_P; for any P its LQR law is K_hat whenever the sum is positive definite"""
    K = _gain_matrix(sys, K_hat)
    gamma = _check_gamma(gamma, sys.n_u)
    P = np.zeros((sys.n_x, sys.n_x)) if P is None else np.atleast_2d(np.asarray(P, dtype=float))
    H = gain_weight(K, gamma) + telescoping_weight(sys, symmetrize(P))
    return StageCost.from_H(H, sys.n_x, P=symmetrize(P))


# SDP formulations

def _riccati_equalities(lmi: LmiProblem, sys: LinearDynamics, K: np.ndarray, Q, R, S, P) -> None:
    A, B = sys.A, sys.B
    if sys.is_discrete:
        lmi.add_eq(A.T @ P @ A - P + Q - (S.T + A.T @ P @ B) @ K, "riccati")
        lmi.add_eq((R + B.T @ P @ B) @ K - S - B.T @ P @ A, "gain")
    else:
        lmi.add_eq(A.T @ P + P @ A + Q - (P @ B + S.T) @ K, "riccati")
        lmi.add_eq(R @ K - B.T @ P - S, "gain")


def _build_problem(
    sys: LinearDynamics,
    K: np.ndarray,
    formulation: Formulation,
    opts: MatchOptions,
    gamma: Optional[np.ndarray] = None,
    beta_cap: Optional[float] = None,
):
    n_x, n_u = sys.n_x, sys.n_u
    k = n_x + n_u
    lmi = LmiProblem(f"match_{formulation.value}")
    P = lmi.symmetric("P", n_x)
    beta = lmi.scalar("beta")

    if formulation == Formulation.DIRECT:
        Q = lmi.symmetric("Q", n_x)
        R = lmi.symmetric("R", n_u)
        S = lmi.matrix("S", n_u, n_x)
        H = cp.bmat([[Q, S.T], [S, R]])
        _riccati_equalities(lmi, sys, K, Q, R, S, P)
    elif formulation == Formulation.INDIRECT:
        alpha = lmi.scalar("alpha")
        lmi.add_nonneg(alpha, "alpha")
        H = alpha * gain_weight(K, gamma) + _telescoping_expr(sys, P)
    elif formulation == Formulation.GAMMA_OPT:
        G = lmi.symmetric("Gamma", n_u)
        H = _gain_weight_expr(K, G) + _telescoping_expr(sys, P)
    else:
        raise InvalidOption(f"formulation {formulation.value} is not an SDP")

    lmi.add_lmi(H - np.eye(k), "H_lower")
    lmi.add_lmi(beta * np.eye(k) - H, "H_upper")
    if opts.objective == Objective.MIN_COND_BLKDIAG_H_P:
        lmi.add_lmi(P - np.eye(n_x), "P_lower")
        lmi.add_lmi(beta * np.eye(n_x) - P, "P_upper")

    S_expr = H[n_x:, :n_x]
    if opts.s_policy == SPolicy.ZERO:
        lmi.add_eq(S_expr, "S_zero")

    if beta_cap is None:
        lmi.minimize(beta)
    else:
        lmi.add_nonneg(beta_cap - beta, "beta_cap")
        lmi.minimize(cp.sum(cp.abs(S_expr)))
    return lmi, H, P


def _solve_formulation(sys, K, formulation, opts, gamma=None, beta_cap=None):
    lmi, H, P = _build_problem(sys, K, formulation, opts, gamma=gamma, beta_cap=beta_cap)
    solution = solve_lmi(lmi, opts.tol)
    if solution.status == SolveStatus.INFEASIBLE:
        if opts.s_policy == SPolicy.ZERO:
            logger.error(f"{lmi.name}: no matching cost with S = 0")
            raise SPolicyInfeasible("no positive-definite cost with S = 0 reproduces this gain")
        logger.error(f"{lmi.name}: solver reported infeasibility")
        raise SdpInfeasible(f"{lmi.name} reported infeasible")
    if solution.status != SolveStatus.OPTIMAL:
        logger.error(f"{lmi.name}: solver returned {solution.status.value}")
        raise NumericalFailure(f"{lmi.name} returned {solution.status.value}")
    return solution, symmetrize(H.value), symmetrize(np.atleast_2d(P.value))


# Projection onto the exact Riccati manifold of K_hat

def _symmetric_basis(n: int):
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            yield E


def _project_P_fixed_S(sys: LinearDynamics, K: np.ndarray, R: np.ndarray, S: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Least-norm symmetric correction of P so that the gain equation holds with S and R fixed"""
    A_K = sys.closed_loop(K)
    B = sys.B
    if sys.is_discrete:
        apply = lambda D: B.T @ D @ A_K
    else:
        apply = lambda D: B.T @ D
    residual = R @ K - S - apply(P)
    if _sup_norm(residual) == 0.0:
        return P
    basis = list(_symmetric_basis(sys.n_x))
    M = np.column_stack([apply(E).reshape(-1) for E in basis])
    coeffs, *_ = np.linalg.lstsq(M, residual.reshape(-1), rcond=None)
    dP = sum(c * E for c, E in zip(coeffs, basis))
    return symmetrize(P + dP)


def _polish(sys: LinearDynamics, K: np.ndarray, H: np.ndarray, P: np.ndarray, s_fixed: bool) -> StageCost:
    n_x = sys.n_x
    A, B = sys.A, sys.B
    R = symmetrize(H[n_x:, n_x:])
    S = H[n_x:, :n_x]
    if s_fixed:
        P = _project_P_fixed_S(sys, K, R, S, P)
    elif sys.is_discrete:
        S = (R + B.T @ P @ B) @ K - B.T @ P @ A
    else:
        S = R @ K - B.T @ P
    if sys.is_discrete:
        Q = P - A.T @ P @ A + K.T @ (R + B.T @ P @ B) @ K
    else:
        Q = K.T @ R @ K - A.T @ P - P @ A
    return StageCost(Q=symmetrize(Q), R=R, S=S, P=symmetrize(P))


def _finalize(
    sys: LinearDynamics,
    K: np.ndarray,
    cost: StageCost,
    formulation: Formulation,
    beta: float,
    objective: Objective = Objective.MIN_COND_H,
    gamma_used: Optional[np.ndarray] = None,
    alpha: Optional[float] = None,
    max_residual: float = 0.0,
    rbar_inflated: bool = False,
) -> MatchResult:
    if min_eig(cost.H) <= 1e-8 * max(1.0, _sup_norm(cost.H)):
        logger.error(f"{formulation.value}: recovered stage cost is not positive definite")
        raise NumericalFailure("recovered stage cost is not positive definite")

    bare = StageCost(Q=cost.Q, R=cost.R, S=cost.S)
    P, K_verified = numerics.solve_riccati(sys, bare)
    gain_error = _sup_norm(K_verified.K - K)
    if gain_error > settings.MATCH_TOL * (1.0 + _sup_norm(K)):
        logger.error(f"{formulation.value}: verified gain differs from K_hat by {gain_error:.3e}")
        raise MatchVerificationFailed(f"verified gain differs from K_hat by {gain_error:.3e}")

    kappa_H = cond_spd(cost.H)
    kappa_HP = cond_spd(np.block([
        [cost.H, np.zeros((cost.H.shape[0], sys.n_x))],
        [np.zeros((sys.n_x, cost.H.shape[0])), P],
    ]))
    bound = kappa_HP if objective == Objective.MIN_COND_BLKDIAG_H_P else kappa_H
    logger.info(f"{formulation.value} match: beta={beta:.6g} kappa(H)={kappa_H:.6g} gain error={gain_error:.2e}")
    return MatchResult(
        cost=StageCost(Q=cost.Q, R=cost.R, S=cost.S, P=P),
        K_verified=K_verified,
        beta=max(beta, bound),
        kappa_H=kappa_H,
        kappa_HP=kappa_HP,
        gamma_used=gamma_used,
        alpha=alpha,
        formulation=formulation,
        gain_error=gain_error,
        rbar_inflated=rbar_inflated,
        max_residual=max_residual,
    )


def _match_sdp(sys: LinearDynamics, K_hat, formulation: Formulation, opts: MatchOptions, gamma=None) -> MatchResult:
    K = _gain_matrix(sys, K_hat)
    _require_stabilizing(sys, K)

    solution, H, P = _solve_formulation(sys, K, formulation, opts, gamma=gamma)
    if opts.s_policy == SPolicy.L1_MIN:
        cap = solution.scalar("beta") * (1.0 + settings.L1_BETA_SLACK)
        solution, H, P = _solve_formulation(sys, K, formulation, opts, gamma=gamma, beta_cap=cap)

    alpha = None
    gamma_used = None
    if formulation == Formulation.INDIRECT:
        alpha = solution.scalar("alpha")
        gamma_used = alpha * gamma
    elif formulation == Formulation.GAMMA_OPT:
        gamma_used = symmetrize(solution.value("Gamma"))

    cost = _polish(sys, K, H, P, s_fixed=opts.s_policy != SPolicy.FREE)
    return _finalize(
        sys, K, cost, formulation,
        beta=solution.scalar("beta"),
        objective=opts.objective,
        gamma_used=gamma_used,
        alpha=alpha,
        max_residual=solution.max_residual,
    )


def match_direct(sys: LinearDynamics, K_hat, opts: Optional[MatchOptions] = None) -> MatchResult:
    """Minimize the condition number of H subject to the Riccati equalities with K_hat fixed"""
    opts = opts or MatchOptions()
    return _match_sdp(sys, K_hat, Formulation.DIRECT, opts)


def match_indirect(sys: LinearDynamics, K_hat, gamma, opts: Optional[MatchOptions] = None) -> MatchResult:
    """H = alpha * H_Gamma + H_P with a user-supplied Gamma"""
    opts = opts or MatchOptions(formulation=Formulation.INDIRECT, gamma=gamma)
    gamma = _check_gamma(gamma, sys.n_u)
    return _match_sdp(sys, K_hat, Formulation.INDIRECT, opts, gamma=gamma)


def match_gamma_opt(sys: LinearDynamics, K_hat, opts: Optional[MatchOptions] = None) -> MatchResult:
    """H = H_Gamma + H_P with Gamma optimized alongside P"""
    opts = opts or MatchOptions(formulation=Formulation.GAMMA_OPT)
    return _match_sdp(sys, K_hat, Formulation.GAMMA_OPT, opts)


def match_constructive(
    sys: LinearDynamics,
    K_hat,
    Qbar=None,
    Rbar_seed=None,
    inflate_rbar: bool = True,
) -> MatchResult:
    """Build a cost for which zero feedback is optimal on the closed loop, then shift it by K_hat"""
    K = _gain_matrix(sys, K_hat)
    _require_stabilizing(sys, K)
    n_x, n_u = sys.n_x, sys.n_u
    Qbar = np.eye(n_x) if Qbar is None else symmetrize(np.atleast_2d(np.asarray(Qbar, dtype=float)))
    Rbar = np.eye(n_u) if Rbar_seed is None else symmetrize(np.atleast_2d(np.asarray(Rbar_seed, dtype=float)))
    if Qbar.shape != (n_x, n_x) or Rbar.shape != (n_u, n_u):
        raise DimensionMismatch("Qbar / Rbar_seed dimensions do not match the system")
    if min_eig(Qbar) <= 0.0 or min_eig(Rbar) <= 0.0:
        raise InvalidOption("Qbar and Rbar_seed must be positive definite")

    A_K = sys.closed_loop(K)
    if sys.is_discrete:
        Pbar = numerics.solve_lyapunov_discrete(A_K, Qbar)
        Sbar = -sys.B.T @ Pbar @ A_K
    else:
        Pbar = numerics.solve_lyapunov_continuous(A_K, Qbar)
        Sbar = -sys.B.T @ Pbar

    coupling = symmetrize(Sbar @ np.linalg.solve(Qbar, Sbar.T))
    inflated = False
    if min_eig(Rbar - coupling) <= 0.0:
        if not inflate_rbar:
            logger.error("Rbar seed does not dominate Sbar Qbar^-1 Sbar^T")
            raise RbarTooSmall()
        logger.warning("Rbar seed too small, inflating to Sbar Qbar^-1 Sbar^T + Rbar_seed")
        Rbar = coupling + Rbar
        inflated = True

    Q = Qbar + Sbar.T @ K + K.T @ Sbar + K.T @ Rbar @ K
    S = Sbar + Rbar @ K
    H = np.block([[Q, S.T], [S, Rbar]])
    H = symmetrize(H / min_eig(H))
    cost = StageCost.from_H(H, n_x)
    return _finalize(
        sys, K, cost, Formulation.CONSTRUCTIVE,
        beta=cond_spd(H),
        rbar_inflated=inflated,
    )


def match_controller(sys: LinearDynamics, K_hat, opts: Optional[MatchOptions] = None) -> MatchResult:
    """Dispatch on opts.formulation"""
    opts = opts or MatchOptions()
    if opts.formulation == Formulation.DIRECT:
        return match_direct(sys, K_hat, opts)
    if opts.formulation == Formulation.INDIRECT:
        return match_indirect(sys, K_hat, opts.gamma, opts)
    if opts.formulation == Formulation.GAMMA_OPT:
        return match_gamma_opt(sys, K_hat, opts)
    return match_constructive(sys, K_hat, opts.Qbar, opts.Rbar_seed, opts.inflate_rbar)


def apply_cost_transformation(
    cost: StageCost,
    P1: Optional[np.ndarray],
    P2: Optional[np.ndarray],
    sigma: float,
    sys: LinearDynamics,
) -> StageCost:
    """sigma * (H + (u + K x)^T P1 (u + K x) + telescoping term of P2); the LQR gain is unchanged"""
    if sigma <= 0:
        raise InvalidOption(f"sigma must be positive, got {sigma}")
    n_x, n_u = sys.n_x, sys.n_u
    P1 = np.zeros((n_u, n_u)) if P1 is None else symmetrize(np.atleast_2d(np.asarray(P1, dtype=float)))
    P2 = np.zeros((n_x, n_x)) if P2 is None else symmetrize(np.atleast_2d(np.asarray(P2, dtype=float)))
    if P1.shape != (n_u, n_u) or P2.shape != (n_x, n_x):
        raise DimensionMismatch(f"P1 must be {(n_u, n_u)} and P2 {(n_x, n_x)}")

    P, gain = numerics.solve_riccati(sys, StageCost(Q=cost.Q, R=cost.R, S=cost.S))
    K = gain.K
    B = sys.B
    curvature = cost.R + P1 + (B.T @ (P + P2) @ B if sys.is_discrete else 0.0)
    if min_eig(curvature) <= 0.0:
        logger.error("Cost transformation proviso violated")
        raise ProvisoViolated()

    H = cost.H + gain_weight(K, P1) - telescoping_weight(sys, P2)
    return StageCost.from_H(sigma * H, n_x, P=sigma * (P - P2))


def verify_match(sys: LinearDynamics, cost: StageCost, K_hat) -> MatchVerification:
    K = _gain_matrix(sys, K_hat)
    _, gain = numerics.solve_riccati(sys, StageCost(Q=cost.Q, R=cost.R, S=cost.S))
    return MatchVerification(
        gain_error=_sup_norm(gain.K - K),
        stabilizing=numerics.is_stable(sys.closed_loop(K), sys.domain),
    )

"""
State estimation
Kalman recursion, one-step and horizon MHE, observer matching through duality
and the H-infinity filter design
"""

import logging
from collections import deque
from typing import Deque, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, solve

from app.core.config import settings
from app.core.exceptions import (
    DimensionMismatch,
    InfeasibleWindow,
    NoConvergence,
    NoFeasibleGamma,
    QpInfeasible,
    SingularInnovation,
    SingularWeight,
)
from app.models.base import min_eig, symmetrize
from app.models.estimation import (
    EstimatorState,
    HinfDesign,
    HorizonEstimate,
    MheEstimate,
    NoiseModel,
    ObserverGain,
    ObserverMatch,
)
from app.models.matching import MatchOptions
from app.models.mpc import QuadraticProgram
from app.models.polyhedron import Polyhedron
from app.models.system import LinearDynamics, TimeDomain
from app.services.matching import match_controller
from app.services.numerics import spectral_radius
from app.services.qp import solve_qp

logger = logging.getLogger(__name__)


def _as2d(M) -> np.ndarray:
    return np.atleast_2d(np.asarray(M, dtype=float))


def _check_pair(A: np.ndarray, C: np.ndarray, noise: NoiseModel) -> None:
    n_x = A.shape[0]
    if A.shape != (n_x, n_x) or C.shape[1] != n_x:
        raise DimensionMismatch(f"A {A.shape} and C {C.shape} are inconsistent")
    if noise.n_x != n_x or noise.n_y != C.shape[0]:
        raise DimensionMismatch(f"noise model is sized ({noise.n_x}, {noise.n_y}), system ({n_x}, {C.shape[0]})")


def kalman_update(A, C, noise: NoiseModel, P) -> Tuple[ObserverGain, np.ndarray]:
    """Predictor-form gain L = (A P C^T + S^T)(C P C^T + R)^-1 and the covariance update"""
    A, C, P = _as2d(A), _as2d(C), _as2d(P)
    _check_pair(A, C, noise)
    innovation = C @ P @ C.T + noise.Rv
    cross = A @ P @ C.T + noise.Svw.T
    if np.linalg.cond(innovation) > 1e14:
        logger.error("Innovation covariance is singular")
        raise SingularInnovation()
    L = np.linalg.solve(innovation.T, cross.T).T
    P_plus = A @ P @ A.T + noise.Qw - L @ (noise.Svw + C @ P @ A.T)
    return ObserverGain(L=L), symmetrize(P_plus)


def steady_state_kalman(A, C, noise: NoiseModel, P0=None) -> Tuple[ObserverGain, np.ndarray]:
    A = _as2d(A)
    P = np.eye(A.shape[0]) if P0 is None else _as2d(P0)
    for iteration in range(settings.KALMAN_MAX_ITER):
        gain, P_next = kalman_update(A, C, noise, P)
        change = np.linalg.norm(P_next - P)
        P = P_next
        if change <= settings.KALMAN_TOL * (1.0 + np.linalg.norm(P)):
            logger.debug(f"Kalman covariance converged after {iteration + 1} updates")
            return kalman_update(A, C, noise, P)[0], P
    logger.error("Kalman covariance iteration did not converge")
    raise NoConvergence(f"Kalman iteration did not converge in {settings.KALMAN_MAX_ITER} updates")


def information_blocks(noise: NoiseModel) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Blocks (R~, S~, Q~) of H_est^-1 in the (v, w) ordering"""
    noise.require_positive_definite()
    Hinv = symmetrize(np.linalg.inv(noise.H_est))
    n_y = noise.n_y
    return Hinv[:n_y, :n_y], Hinv[:n_y, n_y:], Hinv[n_y:, n_y:]


def one_step_mhe(A, C, noise: NoiseModel, state: EstimatorState, y) -> MheEstimate:
    """
    min (x- - x_hat)^T P^-1 (x- - x_hat) + [v; w]^T H_est^-1 [v; w]
    with v = y - C x-, w = x+ - A x-; solved through its normal equations
    """
    A, C = _as2d(A), _as2d(C)
    _check_pair(A, C, noise)
    n = A.shape[0]
    y = np.asarray(y, dtype=float).reshape(-1)
    if min_eig(state.P_est) <= 0.0:
        raise SingularWeight("arrival matrix P_est is not positive definite")
    noise.require_positive_definite()

    W = symmetrize(np.linalg.inv(noise.H_est))
    Pinv = symmetrize(np.linalg.inv(state.P_est))
    M = np.block([[-C, np.zeros((C.shape[0], n))], [-A, np.eye(n)]])
    b = np.concatenate([-y, np.zeros(n)])
    E = np.hstack([np.eye(n), np.zeros((n, n))])

    lhs = E.T @ Pinv @ E + M.T @ W @ M
    rhs = E.T @ Pinv @ state.x_hat + M.T @ W @ b
    try:
        xi = solve(symmetrize(lhs), rhs, assume_a="pos")
    except LinAlgError as e:
        logger.error(f"One-step MHE normal equations failed: {e}")
        raise SingularWeight("MHE normal equations are singular")
    return MheEstimate(x_minus_star=xi[:n], x_plus_star=xi[n:])


def match_observer(A, C, L_hat, opts: Optional[MatchOptions] = None, domain: TimeDomain = TimeDomain.DISCRETE) -> ObserverMatch:
    """Match an observer gain by matching L^T on the dual pair (A^T, C^T)"""
    A, C = _as2d(A), _as2d(C)
    L = _as2d(L_hat.L if isinstance(L_hat, ObserverGain) else L_hat)
    if L.shape != (A.shape[0], C.shape[0]):
        raise DimensionMismatch(f"observer gain has shape {L.shape}, expected {(A.shape[0], C.shape[0])}")
    dual = LinearDynamics(A=A.T, B=C.T, domain=domain)
    result = match_controller(dual, L.T, opts)
    noise = NoiseModel(Qw=result.cost.Q, Rv=result.cost.R, Svw=result.cost.S)
    logger.info(f"Observer matched with kappa(H)={result.kappa_H:.6g}")
    return ObserverMatch(
        noise=noise,
        P=result.P,
        L_verified=ObserverGain(L=result.K_verified.K.T),
        gain_error=result.gain_error,
        kappa_H=result.kappa_H,
    )


# H-infinity filter

def hinf_fixed_point(A, B, C, W, V, G) -> Optional[HinfDesign]:
    """Iterate the Sigma / L / P equations from P0 = B W B^T; None when the design is infeasible"""
    A, B, C, W, V, G = (_as2d(M) for M in (A, B, C, W, V, G))
    n = A.shape[0]
    Qw = symmetrize(B @ W @ B.T)
    Vinv = np.linalg.inv(V)
    GtG = G.T @ G
    I = np.eye(n)
    P = Qw.copy()
    for _ in range(settings.HINF_MAX_ITER):
        try:
            Sigma = symmetrize(np.linalg.solve(I - P @ GtG + P @ C.T @ Vinv @ C, P))
        except np.linalg.LinAlgError:
            return None
        P_next = symmetrize(A @ Sigma @ A.T + Qw)
        if not np.all(np.isfinite(P_next)):
            return None
        change = np.linalg.norm(P_next - P)
        P = P_next
        if change <= settings.HINF_FIXED_POINT_TOL * (1.0 + np.linalg.norm(P)):
            break
    else:
        return None

    Sigma = symmetrize(np.linalg.solve(I - P @ GtG + P @ C.T @ Vinv @ C, P))
    L = A @ Sigma @ C.T @ Vinv
    if min_eig(Sigma) <= 0.0 or min_eig(P) <= 0.0:
        return None
    if min_eig(np.linalg.inv(P) - GtG) <= 0.0:
        return None
    if spectral_radius(A - L @ C) >= 1.0:
        return None
    return HinfDesign(L=L, Sigma=Sigma, P=P, gamma_star=float(np.sqrt(np.max(np.linalg.eigvalsh(GtG)))))


def hinf_design(A, B, C, W, V, G_shape, gamma: Optional[float] = None) -> HinfDesign:
    """
    H-infinity observer with G = gamma * G_shape

    With gamma given the design is evaluated there. Otherwise gamma is maximized
    by bisection over the feasibility of the fixed point.
    """
    G_shape = _as2d(G_shape)
    if gamma is not None:
        design = hinf_fixed_point(A, B, C, W, V, gamma * G_shape)
        if design is None:
            raise NoFeasibleGamma(f"H-infinity design infeasible at gamma = {gamma}")
        return design.model_copy(update={"gamma_star": float(gamma)})

    if hinf_fixed_point(A, B, C, W, V, 0.0 * G_shape) is None:
        raise NoFeasibleGamma("even gamma = 0 is infeasible")
    lo, hi = 0.0, 1.0
    while hinf_fixed_point(A, B, C, W, V, hi * G_shape) is not None:
        lo, hi = hi, 2.0 * hi
        if hi > 1e8:
            raise NoFeasibleGamma("gamma is unbounded for this shape")
    while hi - lo > settings.HINF_BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if hinf_fixed_point(A, B, C, W, V, mid * G_shape) is not None:
            lo = mid
        else:
            hi = mid
    design = hinf_fixed_point(A, B, C, W, V, lo * G_shape)
    logger.info(f"H-infinity design: gamma*={lo:.6f}")
    return design.model_copy(update={"gamma_star": lo})


# Horizon estimation

def _window_maps(A: np.ndarray, M: int) -> list:
    """Phi_k with x_k = Phi_k [x_0; w_0; ...; w_{M-1}] under x_{k+1} = A x_k + w_k"""
    n = A.shape[0]
    n_z = (M + 1) * n
    Phi = np.zeros((n, n_z))
    Phi[:, :n] = np.eye(n)
    maps = [Phi]
    for k in range(M):
        Phi = A @ Phi
        Phi[:, (k + 1) * n:(k + 2) * n] += np.eye(n)
        maps.append(Phi)
    return maps


def mhe_horizon_solve(
    A,
    C,
    noise: NoiseModel,
    arrival: EstimatorState,
    measurements,
    w_constraints: Optional[Polyhedron] = None,
) -> HorizonEstimate:
    """
    Window problem over (x_0, w_0..w_{M-1}); the states follow x_{k+1} = A x_k + w_k

    Stage k weighs [y_k - C x_k; w_k] by H_est^-1; the arrival cost is
    (x_0 - x_hat)^T P^-1 (x_0 - x_hat); rows of w_constraints bound every w_k.
    The states are eliminated, so the Hessian is positive definite whenever
    P and H_est are.
    """
    A, C = _as2d(A), _as2d(C)
    _check_pair(A, C, noise)
    Y = np.asarray(measurements, dtype=float).reshape(-1, C.shape[0])
    M, n, n_y = Y.shape[0], A.shape[0], C.shape[0]
    if M < 1:
        raise DimensionMismatch("measurement window is empty")
    if min_eig(arrival.P_est) <= 0.0:
        raise SingularWeight("arrival matrix P_est is not positive definite")
    noise.require_positive_definite()

    W = symmetrize(np.linalg.inv(noise.H_est))
    Pinv = symmetrize(np.linalg.inv(arrival.P_est))
    n_z = (M + 1) * n
    ws = lambda k: slice((k + 1) * n, (k + 2) * n)
    maps = _window_maps(A, M)

    G = np.zeros((n_z, n_z))
    c = np.zeros(n_z)
    const = float(arrival.x_hat @ Pinv @ arrival.x_hat)
    G[:n, :n] += 2.0 * Pinv
    c[:n] -= 2.0 * Pinv @ arrival.x_hat
    for k in range(M):
        E = np.zeros((n_y + n, n_z))
        E[:n_y] = -C @ maps[k]
        E[n_y:, ws(k)] = np.eye(n)
        d = np.concatenate([Y[k], np.zeros(n)])
        G += 2.0 * E.T @ W @ E
        c += 2.0 * E.T @ W @ d
        const += float(d @ W @ d)

    if w_constraints is not None and w_constraints.n_rows:
        if w_constraints.n_x != n:
            raise DimensionMismatch(f"noise constraints live in dimension {w_constraints.n_x}, expected {n}")
        m_w = w_constraints.n_rows
        A_in = np.zeros((M * m_w, n_z))
        for k in range(M):
            A_in[k * m_w:(k + 1) * m_w, ws(k)] = w_constraints.F
        b_in = np.tile(w_constraints.g, M)
    else:
        A_in, b_in = np.zeros((0, n_z)), np.zeros(0)

    qp = QuadraticProgram(
        G=symmetrize(G), c=c, A_in=A_in, b_in=b_in, A_eq=np.zeros((0, n_z)), b_eq=np.zeros(0)
    )
    try:
        sol = solve_qp(qp)
    except QpInfeasible:
        logger.error("MHE window problem is infeasible")
        raise InfeasibleWindow()
    return HorizonEstimate(
        x=np.array([Phi @ sol.z for Phi in maps]),
        w=sol.z[n:].reshape(M, n),
        objective=sol.objective + const,
    )


class MovingHorizonEstimator:
    """Sliding-window estimator with a frozen arrival matrix; single owner"""

    def __init__(self, A, C, noise: NoiseModel, P_arrival, x0_hat, horizon: int = 1,
                 w_constraints: Optional[Polyhedron] = None):
        if horizon < 1:
            raise DimensionMismatch("horizon must be at least 1")
        self.A = _as2d(A)
        self.C = _as2d(C)
        self.noise = noise
        self.P_arrival = _as2d(P_arrival)
        self.horizon = horizon
        self.w_constraints = w_constraints
        self._arrival = np.asarray(x0_hat, dtype=float).reshape(-1)
        self._window: Deque[np.ndarray] = deque(maxlen=horizon)
        self.x_hat = self._arrival.copy()
        self.last: Optional[HorizonEstimate] = None

    def update(self, y) -> np.ndarray:
        """Add y_k and return the prediction of x_{k+1}"""
        if len(self._window) == self.horizon:
            self._arrival = self.last.x[1].copy()
            self._window.popleft()
        self._window.append(np.asarray(y, dtype=float).reshape(-1))
        self.last = mhe_horizon_solve(
            self.A, self.C, self.noise,
            EstimatorState(x_hat=self._arrival, P_est=self.P_arrival),
            np.array(self._window),
            self.w_constraints,
        )
        self.x_hat = self.last.x[-1].copy()
        return self.x_hat

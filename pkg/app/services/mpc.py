"""
Matched MPC
Sparse and condensed QP assembly, the receding-horizon step, the deviation identity
and a Gauss-Newton SQP for nonlinear prediction models
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    DimensionMismatch,
    EmptyTerminalSet,
    InfeasibleInitialState,
    InfeasibleTrajectory,
    InvalidOption,
    MaxIterations,
    NotPositiveDefinite,
    QpInfeasible,
    QpInfeasibleAtIterate,
)
from app.models.base import min_eig
from app.models.mpc import (
    ConstraintSet,
    DeviationCheck,
    MpcForm,
    MpcProblem,
    MpcStepResult,
    NmpcResult,
    QuadraticProgram,
)
from app.models.polyhedron import Polyhedron
from app.models.system import LinearDynamics, StageCost
from app.services import invariant
from app.services.numerics import finite_difference_jacobian, solve_dare
from app.services.qp import solve_qp

logger = logging.getLogger(__name__)

StageModel = Tuple[np.ndarray, np.ndarray, np.ndarray]


def _with_terminal_matrix(sys: LinearDynamics, cost: StageCost) -> StageCost:
    if cost.P is not None:
        return cost
    P, _ = solve_dare(sys, cost)
    return StageCost(Q=cost.Q, R=cost.R, S=cost.S, P=P)


def build_mpc(
    sys: LinearDynamics,
    cost: StageCost,
    constraints: Optional[ConstraintSet] = None,
    terminal_set: Optional[Polyhedron] = None,
    N: int = 1,
    form: MpcForm = MpcForm.SPARSE,
) -> MpcProblem:
    if not sys.is_discrete:
        raise InvalidOption("MPC needs discrete-time dynamics, discretize first")
    if cost.n_x != sys.n_x or cost.n_u != sys.n_u:
        raise DimensionMismatch(f"cost is sized for ({cost.n_x}, {cost.n_u}), system is ({sys.n_x}, {sys.n_u})")
    constraints = constraints or ConstraintSet.empty(sys.n_x, sys.n_u)
    if constraints.n_rows and (constraints.n_x != sys.n_x or constraints.n_u != sys.n_u):
        raise DimensionMismatch("constraint rows do not match the system dimensions")
    terminal_set = terminal_set or Polyhedron(F=np.zeros((0, sys.n_x)), g=np.zeros(0))
    if terminal_set.n_x != sys.n_x:
        raise DimensionMismatch("terminal set dimension differs from the state dimension")

    cost = _with_terminal_matrix(sys, cost)
    if min_eig(cost.H) <= 0.0:
        raise NotPositiveDefinite("stage cost H is not positive definite")
    if min_eig(cost.P) <= 0.0:
        raise NotPositiveDefinite("terminal matrix P is not positive definite")
    if invariant.is_empty(terminal_set):
        logger.error("Terminal set is empty")
        raise EmptyTerminalSet()

    return MpcProblem(sys=sys, cost=cost, constraints=constraints, terminal_set=terminal_set, N=N, form=form)


# QP assembly

def _sparse_qp(
    models: Sequence[StageModel],
    cost: StageCost,
    constraints: ConstraintSet,
    terminal_set: Polyhedron,
    x0: np.ndarray,
) -> QuadraticProgram:
    """Variables z = (x_0..x_N, u_0..u_{N-1}); x_{k+1} = A_k x_k + B_k u_k + c_k"""
    N = len(models)
    n, m = cost.n_x, cost.n_u
    n_states = (N + 1) * n
    n_z = n_states + N * m
    xs = lambda k: slice(k * n, (k + 1) * n)
    us = lambda k: slice(n_states + k * m, n_states + (k + 1) * m)

    G = np.zeros((n_z, n_z))
    for k in range(N):
        G[xs(k), xs(k)] += 2.0 * cost.Q
        G[us(k), us(k)] += 2.0 * cost.R
        G[us(k), xs(k)] += 2.0 * cost.S
        G[xs(k), us(k)] += 2.0 * cost.S.T
    G[xs(N), xs(N)] += 2.0 * cost.P

    A_eq = np.zeros((n_states, n_z))
    b_eq = np.zeros(n_states)
    A_eq[:n, xs(0)] = np.eye(n)
    b_eq[:n] = x0
    for k, (A_k, B_k, c_k) in enumerate(models):
        rows = slice((k + 1) * n, (k + 2) * n)
        A_eq[rows, xs(k + 1)] = np.eye(n)
        A_eq[rows, xs(k)] = -A_k
        A_eq[rows, us(k)] = -B_k
        b_eq[rows] = c_k

    m_c = constraints.n_rows
    A_in = np.zeros((N * m_c + terminal_set.n_rows, n_z))
    b_in = np.zeros(N * m_c + terminal_set.n_rows)
    for k in range(N):
        rows = slice(k * m_c, (k + 1) * m_c)
        A_in[rows, xs(k)] = constraints.C
        A_in[rows, us(k)] = constraints.D
        b_in[rows] = -constraints.e
    A_in[N * m_c:, xs(N)] = terminal_set.F
    b_in[N * m_c:] = terminal_set.g

    return QuadraticProgram(G=G, c=np.zeros(n_z), A_in=A_in, b_in=b_in, A_eq=A_eq, b_eq=b_eq)


def prediction_matrices(A: np.ndarray, B: np.ndarray, N: int) -> Tuple[np.ndarray, np.ndarray]:
    """x_k = A^k x_0 + sum_{j<k} A^(k-1-j) B u_j, stacked for k = 0..N"""
    n, m = B.shape
    Phi = np.zeros(((N + 1) * n, n))
    Gam = np.zeros(((N + 1) * n, N * m))
    power = np.eye(n)
    for k in range(N + 1):
        Phi[k * n:(k + 1) * n] = power
        power = A @ power
    for k in range(1, N + 1):
        for j in range(k):
            Gam[k * n:(k + 1) * n, j * m:(j + 1) * m] = np.linalg.matrix_power(A, k - 1 - j) @ B
    return Phi, Gam


def _condensed_qp(problem: MpcProblem, x0: np.ndarray) -> Tuple[QuadraticProgram, np.ndarray, np.ndarray]:
    sys, cost, N = problem.sys, problem.cost, problem.N
    n, m = sys.n_x, sys.n_u
    Phi, Gam = prediction_matrices(sys.A, sys.B, N)

    Qb = np.zeros(((N + 1) * n, (N + 1) * n))
    Rb = np.kron(np.eye(N), cost.R)
    Sb = np.zeros((N * m, (N + 1) * n))
    for k in range(N):
        Qb[k * n:(k + 1) * n, k * n:(k + 1) * n] = cost.Q
        Sb[k * m:(k + 1) * m, k * n:(k + 1) * n] = cost.S
    Qb[N * n:, N * n:] = cost.P

    G = 2.0 * (Gam.T @ Qb @ Gam + Sb @ Gam + Gam.T @ Sb.T + Rb)
    c = 2.0 * (Gam.T @ Qb @ Phi + Sb @ Phi) @ x0

    cons, term = problem.constraints, problem.terminal_set
    m_c = cons.n_rows
    Cb = np.zeros((N * m_c, (N + 1) * n))
    Db = np.kron(np.eye(N), cons.D) if m_c else np.zeros((0, N * m))
    for k in range(N):
        Cb[k * m_c:(k + 1) * m_c, k * n:(k + 1) * n] = cons.C
    eb = np.tile(cons.e, N)
    Phi_N, Gam_N = Phi[N * n:], Gam[N * n:]

    A_in = np.vstack([Cb @ Gam + Db, term.F @ Gam_N])
    b_in = np.concatenate([-eb - Cb @ Phi @ x0, term.g - term.F @ Phi_N @ x0])
    qp = QuadraticProgram(
        G=0.5 * (G + G.T), c=c, A_in=A_in, b_in=b_in,
        A_eq=np.zeros((0, N * m)), b_eq=np.zeros(0),
    )
    return qp, Phi, Gam


def assemble_qp(problem: MpcProblem, x0) -> QuadraticProgram:
    x0 = _state_vector(problem.sys, x0)
    if problem.form == MpcForm.CONDENSED:
        return _condensed_qp(problem, x0)[0]
    models = [(problem.sys.A, problem.sys.B, np.zeros(problem.sys.n_x))] * problem.N
    return _sparse_qp(models, problem.cost, problem.constraints, problem.terminal_set, x0)


def _state_vector(sys: LinearDynamics, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n_x:
        raise DimensionMismatch(f"initial state has dimension {x0.shape[0]}, expected {sys.n_x}")
    return x0


def trajectory_cost(cost: StageCost, x_traj: np.ndarray, u_traj: np.ndarray) -> float:
    total = 0.0
    H = cost.H
    for x, u in zip(x_traj[:-1], u_traj):
        w = np.concatenate([x, u])
        total += float(w @ H @ w)
    return total + float(x_traj[-1] @ cost.P @ x_traj[-1])


def mpc_step(problem: MpcProblem, x0_hat) -> MpcStepResult:
    """Solve the horizon problem at x0_hat and return the first input with the multipliers"""
    sys, N = problem.sys, problem.N
    n, m = sys.n_x, sys.n_u
    x0 = _state_vector(sys, x0_hat)

    if problem.form == MpcForm.CONDENSED:
        qp, Phi, Gam = _condensed_qp(problem, x0)
    else:
        qp = assemble_qp(problem, x0)
    try:
        sol = solve_qp(qp)
    except QpInfeasible:
        logger.info(f"MPC problem infeasible at x0 = {x0}")
        raise InfeasibleInitialState(f"no feasible input sequence from x0 = {x0.tolist()}")

    if problem.form == MpcForm.CONDENSED:
        U = sol.z
        X = Phi @ x0 + Gam @ U
    else:
        X = sol.z[:(N + 1) * n]
        U = sol.z[(N + 1) * n:]
    x_traj = X.reshape(N + 1, n)
    u_traj = U.reshape(N, m)

    m_c = problem.constraints.n_rows
    mu = sol.ineq_multipliers
    stage = mu[:N * m_c].reshape(N, m_c)
    terminal = mu[N * m_c:]
    return MpcStepResult(
        u0=u_traj[0],
        x_traj=x_traj,
        u_traj=u_traj,
        stage_multipliers=stage,
        terminal_multipliers=terminal,
        constrained=bool(np.any(mu > settings.ACTIVE_TOL)),
        objective=trajectory_cost(problem.cost, x_traj, u_traj),
    )


def _format_rows(title: str, M: np.ndarray, rhs: Optional[np.ndarray] = None) -> List[str]:
    lines = [f"{title} {M.shape[0]} {M.shape[1] if M.ndim == 2 else 1}"]
    for i in range(M.shape[0]):
        row = " ".join(f"{v:.17g}" for v in np.atleast_1d(M[i]))
        if rhs is not None:
            row += f" | {rhs[i]:.17g}"
        lines.append(row)
    return lines


def export_qp(problem: MpcProblem, x0) -> str:
    """Plain-text dump: Hessian, gradient, inequality rows [A | b], equality rows [A | b]"""
    qp = assemble_qp(problem, x0)
    lines = [f"QP {problem.form.value} N={problem.N} nz={qp.n_z}"]
    lines += _format_rows("HESSIAN", qp.G)
    lines += _format_rows("GRADIENT", qp.c.reshape(-1, 1))
    lines += _format_rows("INEQUALITY", qp.A_in, qp.b_in)
    lines += _format_rows("EQUALITY", qp.A_eq, qp.b_eq)
    lines.append("END")
    return "\n".join(lines) + "\n"


def deviation_identity_check(cost: StageCost, K_hat, sys: LinearDynamics, x_traj, u_traj) -> DeviationCheck:
    """Finite-horizon cost against x0' P x0 plus the weighted deviation from the matched law"""
    x_traj = np.atleast_2d(np.asarray(x_traj, dtype=float))
    u_traj = np.atleast_2d(np.asarray(u_traj, dtype=float))
    K = np.atleast_2d(np.asarray(K_hat, dtype=float))
    if x_traj.shape[0] != u_traj.shape[0] + 1 or x_traj.shape[1] != sys.n_x or u_traj.shape[1] != sys.n_u:
        raise DimensionMismatch(f"trajectory shapes {x_traj.shape}, {u_traj.shape} do not fit the system")
    for k, (x, u) in enumerate(zip(x_traj[:-1], u_traj)):
        defect = x_traj[k + 1] - sys.A @ x - sys.B @ u
        if np.max(np.abs(defect)) > 1e-9 * (1.0 + np.max(np.abs(x_traj[k + 1]))):
            raise InfeasibleTrajectory(f"dynamics violated at step {k}")

    cost = _with_terminal_matrix(sys, cost)
    P = cost.P
    gamma = cost.R + sys.B.T @ P @ sys.B
    lhs = trajectory_cost(cost, x_traj, u_traj)
    rhs = float(x_traj[0] @ P @ x_traj[0])
    for x, u in zip(x_traj[:-1], u_traj):
        d = u + K @ x
        rhs += float(d @ gamma @ d)
    return DeviationCheck(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs))


class MpcController:
    """Receding-horizon policy around an operating point; single owner"""

    def __init__(self, problem: MpcProblem, x_ref=None, u_ref=None):
        self.problem = problem
        self.x_ref = np.zeros(problem.sys.n_x) if x_ref is None else np.asarray(x_ref, dtype=float)
        self.u_ref = np.zeros(problem.sys.n_u) if u_ref is None else np.asarray(u_ref, dtype=float)
        self.last: Optional[MpcStepResult] = None

    def reset(self) -> None:
        self.last = None

    def control(self, k: int, x: np.ndarray, y: Optional[np.ndarray] = None, r: Optional[np.ndarray] = None) -> np.ndarray:
        self.last = mpc_step(self.problem, np.asarray(x, dtype=float) - self.x_ref)
        return self.u_ref + self.last.u0


# Nonlinear prediction model

def _rollout(f: Callable, x0: np.ndarray, u_seq: np.ndarray) -> np.ndarray:
    X = [x0]
    for u in u_seq:
        X.append(np.asarray(f(X[-1], u), dtype=float).reshape(-1))
    return np.array(X)


def nmpc_sqp_step(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    cost: StageCost,
    constraints: Optional[ConstraintSet],
    terminal_set: Optional[Polyhedron],
    N: int,
    x0_hat,
    x_s,
    u_s,
    sqp_iters: Optional[int] = None,
) -> NmpcResult:
    """
    Gauss-Newton SQP for the horizon problem with x+ = f(x, u)

    Cost, constraints and terminal set act on deviations from (x_s, u_s). Each
    iteration linearizes f along the current trajectory by central differences
    and takes the full QP step. Without sqp_iters the loop runs to convergence
    and raises MaxIterations otherwise; with sqp_iters it stops after that many
    iterations and reports whether the step tolerance was met.
    """
    if cost.P is None:
        raise NotPositiveDefinite("NMPC needs the terminal matrix P of the matched cost")
    x_s = np.asarray(x_s, dtype=float).reshape(-1)
    u_s = np.asarray(u_s, dtype=float).reshape(-1)
    n, m = x_s.size, u_s.size
    x0 = np.asarray(x0_hat, dtype=float).reshape(-1)
    if x0.size != n or cost.n_x != n or cost.n_u != m:
        raise DimensionMismatch("NMPC data dimensions are inconsistent")
    constraints = constraints or ConstraintSet.empty(n, m)
    terminal_set = terminal_set or Polyhedron(F=np.zeros((0, n)), g=np.zeros(0))
    limit = settings.NMPC_MAX_ITER if sqp_iters is None else sqp_iters

    U = np.tile(u_s, (N, 1))
    X = _rollout(f, x0, U)
    z = np.concatenate([(X - x_s).reshape(-1), (U - u_s).reshape(-1)])
    converged = False
    step = np.inf
    iteration = 0
    for iteration in range(1, limit + 1):
        models = []
        for k in range(N):
            J = finite_difference_jacobian(lambda w: f(w[:n], w[n:]), np.concatenate([X[k], U[k]]))
            A_k, B_k = J[:, :n], J[:, n:]
            c_k = np.asarray(f(X[k], U[k]), dtype=float) - x_s - A_k @ (X[k] - x_s) - B_k @ (U[k] - u_s)
            models.append((A_k, B_k, c_k))
        qp = _sparse_qp(models, cost, constraints, terminal_set, x0 - x_s)
        try:
            sol = solve_qp(qp)
        except QpInfeasible:
            logger.error(f"NMPC subproblem infeasible at iteration {iteration}")
            raise QpInfeasibleAtIterate(f"QP subproblem infeasible at SQP iteration {iteration}")

        step = float(np.linalg.norm(sol.z - z))
        z = sol.z
        X = x_s + z[:(N + 1) * n].reshape(N + 1, n)
        U = u_s + z[(N + 1) * n:].reshape(N, m)
        if step <= settings.NMPC_STEP_TOL * (1.0 + np.linalg.norm(z)):
            converged = True
            break

    if not converged and sqp_iters is None:
        logger.error(f"NMPC did not converge in {limit} iterations (last step {step:.2e})")
        raise MaxIterations(f"SQP did not converge in {limit} iterations")
    logger.debug(f"NMPC finished after {iteration} iterations, step {step:.2e}")
    return NmpcResult(u0=U[0], converged=converged, iterations=iteration, step_norm=step, x_traj=X, u_traj=U)


class NmpcController:
    """Receding-horizon NMPC policy; single owner"""

    def __init__(self, f, cost, constraints, terminal_set, N, x_s, u_s, sqp_iters: Optional[int] = None):
        self.f = f
        self.cost = cost
        self.constraints = constraints
        self.terminal_set = terminal_set
        self.N = N
        self.x_s = np.asarray(x_s, dtype=float)
        self.u_s = np.asarray(u_s, dtype=float)
        self.sqp_iters = sqp_iters
        self.last: Optional[NmpcResult] = None

    def reset(self) -> None:
        self.last = None

    def control(self, k: int, x: np.ndarray, y: Optional[np.ndarray] = None, r: Optional[np.ndarray] = None) -> np.ndarray:
        self.last = nmpc_sqp_step(
            self.f, self.cost, self.constraints, self.terminal_set,
            self.N, x, self.x_s, self.u_s, self.sqp_iters,
        )
        return self.last.u0

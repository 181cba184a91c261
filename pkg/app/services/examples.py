"""
Packaged examples
Each example builds its data, runs the toolkit end to end and reports the
numbers and traces worth checking against known reference values
"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from app.core.exceptions import DestabilizingGain, SPolicyInfeasible, UnknownExample
from app.models.estimation import NoiseModel
from app.models.job import JobKind, JobResult
from app.models.matching import MatchOptions, Objective, SPolicy
from app.models.mpc import ConstraintSet
from app.models.polyhedron import Polyhedron
from app.models.realization import ArxModel, PidParams
from app.models.sim import (
    ControllerKind,
    ControllerSpec,
    CstrParams,
    NoiseSpec,
    PlantKind,
    PlantSpec,
    SimTrace,
)
from app.models.system import Gain, LinearDynamics, StageCost
from app.services import cstr, estimation, invariant, matching, numerics
from app.services.mpc import build_mpc, mpc_step
from app.services.realization import pid_to_state_feedback
from app.services.simulation import StaticGainPolicy, rms, simulate

logger = logging.getLogger(__name__)


# Scalar Riccati examples

def indefinite_scalar(seed: Optional[int] = None) -> JobResult:
    """Stabilizing DARE roots for an indefinite cost and for the deviation cost of a destabilizing gain"""
    sys1 = LinearDynamics(A=2.0, B=1.0)
    P1, K1 = numerics.solve_dare(sys1, StageCost(Q=0.0, R=1.0, S=0.0))

    sys2 = LinearDynamics(A=0.9, B=0.1)
    K_hat = -2.0
    cost2 = matching.indefinite_cost(sys2, K_hat, gamma=1.0)
    P2, K2 = numerics.solve_dare(sys2, cost2)
    check = matching.verify_match(sys2, cost2, K_hat)
    return JobResult(
        job=JobKind.EXAMPLE,
        name="indefinite_scalar",
        values={
            "riccati_P": float(P1[0, 0]),
            "riccati_K": float(K1.K[0, 0]),
            "indefinite_Q": float(cost2.Q[0, 0]),
            "indefinite_S": float(cost2.S[0, 0]),
            "indefinite_R": float(cost2.R[0, 0]),
            "indefinite_P": float(P2[0, 0]),
            "indefinite_K": float(K2.K[0, 0]),
            "gain_error": check.gain_error,
            "K_hat_stabilizing": check.stabilizing,
        },
    )


def destabilizing_match(seed: Optional[int] = None) -> JobResult:
    """Matching refuses a destabilizing gain and accepts the stabilizing root of the same cost"""
    sys = LinearDynamics(A=0.9, B=0.1)
    K_hat = -2.0
    values = {"closed_loop_eigenvalue": float(sys.closed_loop(np.array([[K_hat]]))[0, 0])}
    try:
        matching.match_direct(sys, K_hat)
        values["rejected"] = False
    except DestabilizingGain as e:
        logger.info(f"Destabilizing gain rejected: {e.detail}")
        values["rejected"] = True
        values["error_code"] = e.error_code

    _, stabilizing = numerics.solve_dare(sys, matching.indefinite_cost(sys, K_hat, gamma=1.0))
    result = matching.match_direct(sys, stabilizing.K)
    values.update({
        "stabilizing_K": float(stabilizing.K[0, 0]),
        "matched_H": result.H,
        "matched_beta": result.beta,
        "gain_error": result.gain_error,
    })
    return JobResult(job=JobKind.EXAMPLE, name="destabilizing_match", values=values)


# Tuning with Gamma under an active constraint

GAMMA_SYSTEM = dict(A=-0.8, B=[[0.1, 0.1, 0.1]])
GAMMA_K_HAT = np.array([[0.5], [0.5], [0.2]])
GAMMA_REFERENCE_H = np.array([
    [1.3128, 0.6917, 0.7088, 0.4775],
    [0.6917, 1.1610, -0.1849, 0.1173],
    [0.7088, -0.1849, 1.2435, -0.0036],
    [0.4775, 0.1173, -0.0036, 1.2021],
])


def gamma_tuning_problem():
    sys = LinearDynamics(**GAMMA_SYSTEM)
    constraints = ConstraintSet(C=[[1.0]], D=[[0.0, 0.0, 0.0]], e=[-0.7])
    terminal_set = Polyhedron(F=[[1.0]], g=[0.7])
    return sys, constraints, terminal_set


def gamma_tuning(seed: Optional[int] = None) -> JobResult:
    """First MPC input at x0 = -1 under Gamma = I, Gamma = diag(1, 100, 1) and the direct cost"""
    sys, constraints, terminal_set = gamma_tuning_problem()
    x0 = np.array([-1.0])

    costs = {
        "gamma_identity": matching.match_indirect(sys, GAMMA_K_HAT, np.eye(3)).cost,
        "gamma_weighted": matching.match_indirect(sys, GAMMA_K_HAT, np.diag([1.0, 100.0, 1.0])).cost,
    }
    direct = matching.match_direct(sys, GAMMA_K_HAT)
    costs["direct"] = direct.cost
    costs["reference_H"] = StageCost.from_H(GAMMA_REFERENCE_H, 1)

    values: Dict[str, object] = {"direct_H": direct.H, "direct_beta": direct.beta}
    for name, cost in costs.items():
        step = mpc_step(build_mpc(sys, cost, constraints, terminal_set, N=1), x0)
        values[f"u_{name}"] = step.u0
        values[f"deviation_{name}"] = np.abs(step.u0 + GAMMA_K_HAT @ x0)

    mpi = invariant.compute_mpi(
        sys.closed_loop(GAMMA_K_HAT),
        invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, GAMMA_K_HAT),
    )
    values["mpi_F"] = mpi.F
    values["mpi_g"] = mpi.g
    return JobResult(job=JobKind.EXAMPLE, name="gamma_tuning", values=values)


# PID in input-output form

PID_ARX = dict(A_coeffs=[[[1.8]], [[1.2]]], B_coeffs=[[[1.0]]], ts=2.0)
PID_GAINS = dict(Kp=0.752, Ki=0.248, Kd=2.237, ts=2.0)
PID_SECOND_GAIN = np.array([[4.0, 2.0, 0.15, 1.6]])
PID_X0 = np.array([5.5, 4.0, 0.0, 0.0])
PID_U_BOUND = 24.0
PID_Y_MIN = -5.0


def pid_io_problem():
    sys, K_hat = pid_to_state_feedback(PidParams(**PID_GAINS), ArxModel(**PID_ARX))
    y_row = sys.C_y
    constraints = ConstraintSet.input_box([-PID_U_BOUND], [PID_U_BOUND], sys.n_x).stack(
        ConstraintSet(C=-y_row, D=[[0.0]], e=[PID_Y_MIN])
    )
    return sys, K_hat, constraints


def _mpc_trace(sys: LinearDynamics, K_hat: np.ndarray, cost: StageCost, constraints: ConstraintSet,
               N: int, steps: int) -> SimTrace:
    mpi = invariant.compute_mpi(
        sys.closed_loop(K_hat),
        invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, K_hat),
    )
    problem = build_mpc(sys, cost, constraints, mpi, N=N)
    plant = PlantSpec(kind=PlantKind.LINEAR_DT, sys=sys, ts=sys.ts)
    return simulate(plant, ControllerSpec(kind=ControllerKind.MPC, mpc=problem), PID_X0, steps)


def _pid_traces(sys: LinearDynamics, K_hat: np.ndarray, cost: StageCost, constraints: ConstraintSet,
                steps: int) -> Dict[str, SimTrace]:
    plant = PlantSpec(kind=PlantKind.LINEAR_DT, sys=sys, ts=sys.ts)
    gain = Gain(K=K_hat)
    bounds = dict(u_lb=[-PID_U_BOUND], u_ub=[PID_U_BOUND])
    return {
        "mpc": _mpc_trace(sys, K_hat, cost, constraints, N=10, steps=steps),
        "pid": simulate(plant, ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=gain), PID_X0, steps),
        "pid_saturated": simulate(
            plant, ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=gain, **bounds), PID_X0, steps
        ),
    }


def _violation(trace: SimTrace, constraints: ConstraintSet) -> float:
    return max(constraints.violation(x, u) for x, u in zip(trace.x, trace.u))


def pid_io(seed: Optional[int] = None, steps: int = 25) -> JobResult:
    """PID on an unstable ARX plant: matched costs, conditioning and the three closed loops"""
    sys, gain, constraints = pid_io_problem()
    K_hat = gain.K
    values: Dict[str, object] = {"K_hat": K_hat, "A": sys.A}

    free = matching.match_direct(sys, K_hat)
    zero = matching.match_direct(sys, K_hat, MatchOptions(s_policy=SPolicy.ZERO))
    values.update({"kappa_H": free.kappa_H, "kappa_H_S_zero": zero.kappa_H})
    for policy in (SPolicy.ZERO, SPolicy.FREE):
        blk = matching.match_direct(
            sys, K_hat, MatchOptions(s_policy=policy, objective=Objective.MIN_COND_BLKDIAG_H_P)
        )
        values[f"kappa_blkdiag_S_{policy.value}"] = blk.kappa_HP

    try:
        matching.match_direct(sys, PID_SECOND_GAIN, MatchOptions(s_policy=SPolicy.ZERO))
        values["second_gain_S_zero_feasible"] = True
    except SPolicyInfeasible:
        values["second_gain_S_zero_feasible"] = False
    second = matching.match_direct(sys, PID_SECOND_GAIN)
    values["second_gain_kappa_H"] = second.kappa_H

    traces = _pid_traces(sys, K_hat, free.cost, constraints, steps)
    for name, trace in traces.items():
        values[f"max_violation_{name}"] = _violation(trace, constraints)
    return JobResult(job=JobKind.EXAMPLE, name="pid_io", values=values, traces=traces)


# CSTR with PI and anti-windup

CSTR_STEP = 10.0
CSTR_T_MAX = 312.0


def cstr_example(seed: Optional[int] = None, step: float = CSTR_STEP, T_max: float = CSTR_T_MAX,
                 steps: int = 100, N: int = 10) -> JobResult:
    """Reference step under PI, MPC, MPC with a temperature bound and NMPC with the same bound"""
    params = CstrParams()
    design = cstr.cstr_closed_loop_design(params)
    matched = matching.match_direct(cstr.matched_system(design), design.K_bar)
    plant = cstr.cstr_plant(design.params)
    x0 = design.x_s[:2]
    reference = np.array([[design.r_s + step]])

    pi = ControllerSpec(
        kind=ControllerKind.PID_AW,
        pid=cstr.cstr_pid(design.params),
        reference=reference,
        integral0=float(design.x_s[cstr.I_INDEX]),
    )
    policies = {
        "pi": pi,
        "mpc": cstr.CstrMpcPolicy(design, matched.cost, N),
        "mpcx": cstr.CstrMpcPolicy(design, matched.cost, N, T_max=T_max),
        "nmpc": cstr.CstrMpcPolicy(design, matched.cost, N, T_max=T_max, nonlinear=True, sqp_iters=5),
    }
    traces = {name: simulate(plant, policy, x0, steps, reference=reference) for name, policy in policies.items()}

    values: Dict[str, object] = {
        "C_p": design.params.C_p,
        "x_s": design.x_s,
        "K_bar": design.K_bar,
        "closed_loop_poles": np.sort_complex(numerics.eigenvalues(design.A_PI)).real,
        "beta": matched.beta,
        "kappa_H": matched.kappa_H,
        "T_max": T_max,
    }
    for name, trace in traces.items():
        values[f"max_T_{name}"] = float(np.max(trace.x[:, cstr.T_INDEX]))
        values[f"final_T_{name}"] = float(trace.x[-1, cstr.T_INDEX])
        values[f"failure_{name}"] = trace.failure
    return JobResult(job=JobKind.EXAMPLE, name="cstr", values=values, traces=traces)


# H-infinity tuned MHE

HINF_A = np.array([[0.93, 0.09], [-0.61, 0.92]])
HINF_B = np.array([[0.01, 0.01], [0.003, 0.12]])
HINF_C = np.array([[1.0, 0.0]])
HINF_W = np.diag([10.0, 10.0])
HINF_V = np.array([[0.01]])
HINF_G_SHAPE = np.diag([0.1, 1.0])


def hinf_plant_map(x, u=None, d=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    perturbation = np.array([[0.0, 0.0], [-2.0 * x[1], 0.1 * x[1]]])
    return (HINF_A + perturbation) @ x


def _observer_errors(x: np.ndarray, y: np.ndarray, predict: Callable[[np.ndarray], np.ndarray], x0_hat) -> np.ndarray:
    """Errors x_{k+1} - x_hat_{k+1} of a one-step predictor fed y_0..y_{n-1}"""
    errors = []
    x_hat = np.asarray(x0_hat, dtype=float)
    for k in range(len(y) - 1):
        x_hat = predict(x_hat, y[k])
        errors.append(x[k + 1] - x_hat)
    return np.array(errors)


def hinf_mhe(seed: Optional[int] = None, steps: int = 100, horizon: int = 10) -> JobResult:
    """H-infinity observer matched by an MHE cost, compared with the covariance-tuned MHE"""
    seed = 0 if seed is None else seed
    design = estimation.hinf_design(HINF_A, HINF_B, HINF_C, HINF_W, HINF_V, HINF_G_SHAPE)
    Qw = HINF_B @ HINF_W @ HINF_B.T
    standard_noise = NoiseModel.uncorrelated(Qw, HINF_V)
    kalman_gain, kalman_P = estimation.steady_state_kalman(HINF_A, HINF_C, standard_noise)
    tuned = estimation.match_observer(HINF_A, HINF_C, design.L)

    # w >= 0 seen through the state-space noise B w
    w_constraints = Polyhedron.from_rows(-np.linalg.inv(HINF_B), np.zeros(2))

    plant = PlantSpec(kind=PlantKind.NONLINEAR_DT, ts=1.0, rhs=hinf_plant_map, output=lambda x: HINF_C @ x)
    noise = NoiseSpec(W=HINF_W, V=HINF_V, G=HINF_B, seed=seed, rectified=True)
    trace = simulate(plant, StaticGainPolicy(np.zeros((1, 2))), np.zeros(2), steps, noise=noise)

    x0_hat = np.zeros(2)
    estimators = {
        "mhe_tuned": estimation.MovingHorizonEstimator(
            HINF_A, HINF_C, tuned.noise, tuned.P, x0_hat, horizon, w_constraints
        ),
        "mhe_standard": estimation.MovingHorizonEstimator(
            HINF_A, HINF_C, standard_noise, kalman_P, x0_hat, horizon, w_constraints
        ),
    }
    predictors = {name: (lambda est: lambda x_hat, y: est.update(y))(est) for name, est in estimators.items()}
    for name, L in (("hinf", design.L), ("kalman", kalman_gain.L)):
        predictors[name] = (lambda L: lambda x_hat, y: HINF_A @ x_hat - L @ (HINF_C @ x_hat - y))(L)

    values: Dict[str, object] = {
        "gamma_star": design.gamma_star,
        "L_hinf": design.L,
        "L_kalman": kalman_gain.L,
        "tuned_H_inverse": np.linalg.inv(tuned.noise.H_est),
        "tuned_gain_error": tuned.gain_error,
        "seed": seed,
    }
    for name, predict in predictors.items():
        values[f"rms_{name}"] = rms(_observer_errors(trace.x, trace.y, predict, x0_hat))
    return JobResult(job=JobKind.EXAMPLE, name="hinf_mhe", values=values, traces={"plant": trace})


EXAMPLES: Dict[str, Callable[..., JobResult]] = {
    "indefinite_scalar": indefinite_scalar,
    "destabilizing_match": destabilizing_match,
    "gamma_tuning": gamma_tuning,
    "pid_io": pid_io,
    "cstr": cstr_example,
    "hinf_mhe": hinf_mhe,
}


def examples_list() -> List[str]:
    return list(EXAMPLES)


def run_example(name: str, seed: Optional[int] = None) -> JobResult:
    if name not in EXAMPLES:
        logger.error(f"Unknown example '{name}'")
        raise UnknownExample(f"unknown example '{name}', expected one of {', '.join(EXAMPLES)}")
    logger.info(f"Running example {name}")
    return EXAMPLES[name](seed=seed)

"""
Job handlers
One function per job kind, each turning a validated JobConfig into a JobResult
"""

import logging
from typing import Optional

import numpy as np

from app.core.exceptions import MissingOutputMap
from app.models.estimation import NoiseModel
from app.models.job import JobConfig, JobKind, JobResult
from app.models.matching import MatchResult
from app.models.mpc import ConstraintSet
from app.models.polyhedron import Polyhedron
from app.models.sim import ControllerKind, ControllerSpec, NoiseSpec, PlantKind, PlantSpec
from app.models.system import LinearDynamics
from app.services import estimation, invariant, numerics
from app.services.examples import run_example
from app.services.matching import match_controller
from app.services.mpc import build_mpc
from app.services.realization import arx_to_ss, io_controller_to_gain, pid_to_state_feedback
from app.services.simulation import StaticGainPolicy, rms, simulate

logger = logging.getLogger(__name__)


def _match_values(result: MatchResult) -> dict:
    return {
        "formulation": result.formulation,
        "H": result.H,
        "Q": result.cost.Q,
        "R": result.cost.R,
        "S": result.cost.S,
        "P": result.P,
        "K_verified": result.K_verified.K,
        "beta": result.beta,
        "kappa_H": result.kappa_H,
        "kappa_HP": result.kappa_HP,
        "gain_error": result.gain_error,
        "gamma_used": result.gamma_used,
        "alpha": result.alpha,
        "rbar_inflated": result.rbar_inflated,
    }


def _closed_loop_mpi(sys: LinearDynamics, K: np.ndarray, constraints: ConstraintSet) -> Polyhedron:
    rows = invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, K)
    return invariant.compute_mpi(sys.closed_loop(K), rows)


def run_match(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    result = match_controller(config.plant, config.gain, config.match)
    return JobResult(job=JobKind.MATCH, values=_match_values(result))


def run_mpi(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    mpi = _closed_loop_mpi(config.plant, config.gain, config.constraints)
    return JobResult(
        job=JobKind.MPI,
        values={"F": mpi.F, "g": mpi.g, "n_rows": mpi.n_rows},
        polyhedra={"mpi": mpi},
    )


def run_mpc_sim(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    sys, K, mpc = config.plant, config.gain, config.mpc
    constraints = config.constraints or ConstraintSet.empty(sys.n_x, sys.n_u)
    matched = match_controller(sys, K, config.match)
    terminal_set = None
    if mpc.terminal_set == "mpi" and constraints.n_rows:
        terminal_set = _closed_loop_mpi(sys, K, constraints)
    problem = build_mpc(sys, matched.cost, constraints, terminal_set, N=mpc.N, form=mpc.form)

    plant = PlantSpec(kind=PlantKind.LINEAR_DT, sys=sys, ts=sys.ts or 1.0)
    trace = simulate(plant, ControllerSpec(kind=ControllerKind.MPC, mpc=problem), mpc.x0, mpc.steps)
    violation = max(constraints.violation(x, u) for x, u in zip(trace.x, trace.u)) if constraints.n_rows else 0.0
    values = _match_values(matched)
    values.update({
        "max_violation": violation,
        "failure_step": trace.failure_step,
        "failure": trace.failure,
        "x_final": trace.x_final,
    })
    polyhedra = {"terminal_set": terminal_set} if terminal_set is not None else {}
    return JobResult(job=JobKind.MPC_SIM, values=values, traces={"mpc": trace}, polyhedra=polyhedra)


def run_mhe_sim(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    """Linear plant x+ = A x + B w, y = C x + v, estimated by MHE and by the Kalman predictor"""
    sys, mhe = config.plant, config.mhe
    if sys.C_y is None:
        raise MissingOutputMap("mhe_sim needs an output map")
    seed = seed if seed is not None else (config.seed or 0)
    Qw = sys.B @ mhe.W @ sys.B.T
    noise_model = NoiseModel.uncorrelated(Qw, mhe.V)
    gain, P = estimation.steady_state_kalman(sys.A, sys.C_y, noise_model)

    w_constraints = None
    if mhe.rectified and sys.n_u == sys.n_x:
        w_constraints = Polyhedron.from_rows(-np.linalg.inv(sys.B), np.zeros(sys.n_x))

    plant = PlantSpec(kind=PlantKind.LINEAR_DT, sys=sys, ts=sys.ts or 1.0)
    noise = NoiseSpec(W=mhe.W, V=mhe.V, G=sys.B, seed=seed, rectified=mhe.rectified)
    trace = simulate(plant, StaticGainPolicy(np.zeros((sys.n_u, sys.n_x))), mhe.x0, mhe.steps, noise=noise)

    x0_hat = mhe.x0_hat if mhe.x0_hat is not None else np.zeros(sys.n_x)
    estimator = estimation.MovingHorizonEstimator(sys.A, sys.C_y, noise_model, P, x0_hat, mhe.horizon, w_constraints)
    x_kf = np.array(x0_hat, dtype=float)
    mhe_errors, kf_errors = [], []
    for k in range(trace.steps - 1):
        x_mhe = estimator.update(trace.y[k])
        x_kf = sys.A @ x_kf - gain.L @ (sys.C_y @ x_kf - trace.y[k])
        mhe_errors.append(trace.x[k + 1] - x_mhe)
        kf_errors.append(trace.x[k + 1] - x_kf)

    values = {
        "L_kalman": gain.L,
        "P_arrival": P,
        "rms_mhe": rms(np.array(mhe_errors)) if mhe_errors else 0.0,
        "rms_kalman": rms(np.array(kf_errors)) if kf_errors else 0.0,
        "seed": seed,
    }
    return JobResult(job=JobKind.MHE_SIM, values=values, traces={"plant": trace})


def run_realize(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    if config.pid is not None:
        sys, gain = pid_to_state_feedback(config.pid, config.arx)
    else:
        sys = arx_to_ss(config.arx)
        gain = io_controller_to_gain(config.io_controller, config.arx)
    values = {
        "A": sys.A,
        "B": sys.B,
        "C_y": sys.C_y,
        "K_hat": gain.K,
        "stabilizing": numerics.is_stable(sys.closed_loop(gain.K), sys.domain),
    }
    if values["stabilizing"]:
        values.update({f"match_{k}": v for k, v in _match_values(match_controller(sys, gain, config.match)).items()})
    return JobResult(job=JobKind.REALIZE, values=values)


def run_example_job(config: JobConfig, seed: Optional[int] = None) -> JobResult:
    return run_example(config.example, seed=seed if seed is not None else config.seed)

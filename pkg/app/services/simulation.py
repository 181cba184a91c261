"""
Closed-loop simulation
Plants, controller policies, seeded noise, metrics and trace export
"""

import logging
from pathlib import Path
from typing import Callable, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import (
    DimensionMismatch,
    InfeasibleInitialState,
    IoError,
    NotPositiveDefinite,
    PlantBlowup,
    QpInfeasibleAtIterate,
)
from app.models.base import symmetrize
from app.models.realization import PidParams
from app.models.sim import (
    ControllerKind,
    ControllerSpec,
    Integrator,
    NoiseSpec,
    PidState,
    PlantKind,
    PlantSpec,
    SimTrace,
)
from app.services.mpc import MpcController, NmpcController
from app.services.numerics import discretize_zoh

logger = logging.getLogger(__name__)


class Policy(Protocol):
    def reset(self) -> None: ...

    def control(self, k: int, x: np.ndarray, y: Optional[np.ndarray], r: Optional[np.ndarray]) -> np.ndarray: ...


# Controller laws

def pid_aw_step(pid: PidParams, state: PidState, e: float) -> Tuple[float, PidState]:
    """
    One sample of the PID law with back-calculation anti-windup

    v = Kp e + Ki I + Kd (e - e_prev) / ts, u = sat(v) and
    I+ = I + ts (e + Kaw (u - v)), explicit Euler at the controller period.
    """
    e = float(e)
    derivative = 0.0 if state.prev_error is None else pid.Kd * (e - state.prev_error) / pid.ts
    v = pid.Kp * e + pid.Ki * state.integral + derivative
    u = v
    if pid.u_lb is not None:
        u = max(u, pid.u_lb)
    if pid.u_ub is not None:
        u = min(u, pid.u_ub)
    correction = (pid.Kaw or 0.0) * (u - v)
    integral = state.integral + pid.ts * (e + correction)
    return u, PidState(integral=integral, prev_error=e)


class StaticGainPolicy:
    """u = -K x + F r, optionally saturated"""

    def __init__(self, K: np.ndarray, F: Optional[np.ndarray] = None, u_lb=None, u_ub=None):
        self.K = np.atleast_2d(K)
        self.F = F
        self.u_lb = u_lb
        self.u_ub = u_ub

    def reset(self) -> None:
        pass

    def control(self, k, x, y=None, r=None):
        u = -self.K @ x
        if self.F is not None and r is not None:
            u = u + self.F @ r
        if self.u_lb is not None:
            u = np.clip(u, self.u_lb, self.u_ub)
        return u


class PidPolicy:
    """SISO PID on the first output with error e = r - y"""

    def __init__(self, pid: PidParams, integral0: float = 0.0):
        self.pid = pid
        self.integral0 = integral0
        self.state = PidState(integral=integral0)

    def reset(self) -> None:
        self.state = PidState(integral=self.integral0)

    def control(self, k, x, y=None, r=None):
        if y is None:
            raise DimensionMismatch("PID needs a measured output")
        setpoint = 0.0 if r is None else float(np.atleast_1d(r)[0])
        u, self.state = pid_aw_step(self.pid, self.state, setpoint - float(np.atleast_1d(y)[0]))
        return np.array([u])


def make_policy(spec: ControllerSpec) -> Policy:
    if spec.kind == ControllerKind.STATIC_GAIN:
        return StaticGainPolicy(spec.gain.K, spec.feedforward, spec.u_lb, spec.u_ub)
    if spec.kind == ControllerKind.PID_AW:
        return PidPolicy(spec.pid, spec.integral0)
    if spec.kind == ControllerKind.MPC:
        return MpcController(spec.mpc)
    nmpc = spec.nmpc
    return NmpcController(
        nmpc.f, nmpc.cost, nmpc.constraints, nmpc.terminal_set,
        nmpc.N, nmpc.x_s, nmpc.u_s, nmpc.sqp_iters,
    )


# Plants

def rk4_step(rhs: Callable, x: np.ndarray, u: np.ndarray, d, ts: float, substeps: int = 1) -> np.ndarray:
    """Classical fourth-order Runge-Kutta over ts with the input held constant"""
    h = ts / substeps
    x = np.asarray(x, dtype=float)
    for _ in range(substeps):
        k1 = np.asarray(rhs(x, u, d), dtype=float)
        k2 = np.asarray(rhs(x + 0.5 * h * k1, u, d), dtype=float)
        k3 = np.asarray(rhs(x + 0.5 * h * k2, u, d), dtype=float)
        k4 = np.asarray(rhs(x + h * k3, u, d), dtype=float)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def plant_step(plant: PlantSpec) -> Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], np.ndarray]:
    """x_{k+1} = step(x_k, u_k, d_k) for the plant's kind and integrator"""
    if plant.kind == PlantKind.LINEAR_DT:
        A, B = plant.sys.A, plant.sys.B
        return lambda x, u, d: A @ x + B @ u
    if plant.kind == PlantKind.LINEAR_CT:
        if plant.integrator == Integrator.ZOH:
            discrete = discretize_zoh(plant.sys, plant.ts)
            A, B = discrete.A, discrete.B
            return lambda x, u, d: A @ x + B @ u
        A, B = plant.sys.A, plant.sys.B
        return lambda x, u, d: rk4_step(lambda z, v, _: A @ z + B @ v, x, u, d, plant.ts, plant.substeps)
    if plant.kind == PlantKind.NONLINEAR_CT:
        return lambda x, u, d: rk4_step(plant.rhs, x, u, d, plant.ts, plant.substeps)
    return lambda x, u, d: np.asarray(plant.rhs(x, u, d), dtype=float)


def plant_output(plant: PlantSpec, x: np.ndarray) -> np.ndarray:
    """Measured output before the input is applied; feedthrough is not modelled"""
    if plant.output is not None:
        return np.atleast_1d(np.asarray(plant.output(x), dtype=float))
    if plant.sys is not None and plant.sys.C_y is not None:
        return plant.sys.C_y @ x
    return np.array(x, dtype=float)


# Noise

def _covariance_factor(covariance) -> np.ndarray:
    cov = symmetrize(np.atleast_2d(np.asarray(covariance, dtype=float)))
    w, V = np.linalg.eigh(cov)
    if w.min(initial=0.0) < -1e-12 * max(1.0, abs(w).max(initial=0.0)):
        logger.error(f"Noise covariance has a negative eigenvalue {w.min():.3e}")
        raise NotPositiveDefinite("noise covariance is not positive semidefinite")
    return V * np.sqrt(np.clip(w, 0.0, None))


def _draw(rng: np.random.Generator, covariance, n_samples: int) -> np.ndarray:
    F = _covariance_factor(covariance)
    return rng.standard_normal((n_samples, F.shape[0])) @ F.T


def seeded_noise(seed: int, covariance, n_samples: int) -> np.ndarray:
    """Gaussian samples (rows) with the given covariance, deterministic per seed"""
    return _draw(np.random.default_rng(seed), covariance, n_samples)


def _noise_streams(noise: Optional[NoiseSpec], steps: int, n_x: int, n_y: int, run_id: int = 0):
    if noise is None:
        return np.zeros((steps, n_x)), np.zeros((steps, 0)), np.zeros((steps, n_y))
    process_seq, measurement_seq = np.random.SeedSequence([noise.seed, run_id]).spawn(2)
    if noise.W is not None:
        w = _draw(np.random.default_rng(process_seq), noise.W, steps)
        if noise.rectified:
            w = np.abs(w)
    else:
        w = np.zeros((steps, 0))
    v = _draw(np.random.default_rng(measurement_seq), noise.V, steps) if noise.V is not None else np.zeros((steps, n_y))

    G = noise.G
    if G is None:
        G = np.eye(n_x) if w.shape[1] == n_x else np.zeros((n_x, w.shape[1]))
    if G.shape != (n_x, w.shape[1]):
        raise DimensionMismatch(f"noise input matrix has shape {G.shape}, expected {(n_x, w.shape[1])}")
    if v.shape[1] != n_y:
        raise DimensionMismatch(f"measurement noise has {v.shape[1]} channels for {n_y} outputs")
    return w @ G.T, w, v


# Simulation

def simulate(
    plant: PlantSpec,
    controller: Union[ControllerSpec, Policy],
    x0,
    steps: int,
    noise: Optional[NoiseSpec] = None,
    reference=None,
    run_id: int = 0,
) -> SimTrace:
    """
    Run the closed loop for a number of steps

    The controller sees the state and the noisy output at step k and returns u_k.
    An infeasible MPC/NMPC subproblem ends the run early with the failing step
    recorded; PlantBlowup is raised when the state leaves the blow-up bound.
    """
    if steps < 1:
        raise DimensionMismatch("steps must be positive")
    if isinstance(controller, ControllerSpec):
        policy = make_policy(controller)
        u_lb, u_ub = controller.u_lb, controller.u_ub
        reference_at = controller.reference_at
    else:
        policy = controller
        u_lb = u_ub = None
        ref = None if reference is None else np.atleast_2d(np.asarray(reference, dtype=float))
        reference_at = (lambda k: None) if ref is None else (lambda k: ref[min(k, ref.shape[0] - 1)])
    policy.reset()

    x = np.asarray(x0, dtype=float).reshape(-1)
    step = plant_step(plant)
    n_y = plant_output(plant, x).size
    state_noise, w, v = _noise_streams(noise, steps, x.size, n_y, run_id)

    xs, us, ys, rs = [], [], [], []
    failure_step, failure = None, None
    for k in range(steps):
        y = plant_output(plant, x) + v[k]
        r = reference_at(k)
        try:
            u = np.atleast_1d(np.asarray(policy.control(k, x, y, r), dtype=float))
        except (InfeasibleInitialState, QpInfeasibleAtIterate) as e:
            logger.warning(f"Controller failed at step {k}: {e}")
            failure_step, failure = k, str(e)
            break
        if u_lb is not None:
            u = np.clip(u, u_lb, u_ub)
        d = None if plant.disturbance is None else plant.disturbance[min(k, plant.disturbance.shape[0] - 1)]

        xs.append(x)
        us.append(u)
        ys.append(y)
        rs.append(np.zeros(0) if r is None else np.atleast_1d(r))

        x = step(x, u, d) + state_noise[k]
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > settings.BLOWUP_NORM:
            logger.error(f"Plant state norm {norm:.3e} exceeded the bound at step {k}")
            raise PlantBlowup(f"state norm {norm:.3e} at step {k + 1}")

    n = len(xs)
    if n == 0:
        raise InfeasibleInitialState(f"controller failed at the first step: {failure}")
    logger.info(f"Simulated {n} steps" + (f", stopped by failure at step {failure_step}" if failure else ""))
    return SimTrace(
        t=plant.ts * np.arange(n),
        x=np.array(xs),
        u=np.array(us),
        y=np.array(ys),
        r=np.array(rs),
        x_final=x,
        seed=None if noise is None else noise.seed,
        w=w[:n],
        v=v[:n],
        failure_step=failure_step,
        failure=failure,
    )


# Metrics and export

def rms(trace: Union[SimTrace, np.ndarray], selector: Optional[str] = None, index: Optional[int] = None) -> float:
    """Root mean square of a signal; selector picks x, u, y or r of a trace"""
    if isinstance(trace, SimTrace):
        if selector not in ("x", "u", "y", "r"):
            raise DimensionMismatch(f"unknown trace signal '{selector}'")
        signal = getattr(trace, selector)
        if index is not None:
            signal = signal[:, index]
    else:
        signal = np.asarray(trace, dtype=float)
    if signal.size == 0:
        raise DimensionMismatch("rms of an empty signal")
    return float(np.sqrt(np.mean(np.square(signal))))


def trace_frame(trace: SimTrace) -> pd.DataFrame:
    columns = {"t": trace.t}
    for name in ("x", "u", "y", "r"):
        signal = getattr(trace, name)
        for i in range(signal.shape[1]):
            columns[f"{name}{i + 1}"] = signal[:, i]
    return pd.DataFrame(columns)


def export_trace_csv(trace: SimTrace, path) -> Path:
    path = Path(path)
    try:
        trace_frame(trace).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        logger.error(f"Failed to write trace {path}: {e}")
        raise IoError(f"cannot write {path}: {e}")
    return path


__all__ = [
    "Policy",
    "PidPolicy",
    "StaticGainPolicy",
    "export_trace_csv",
    "make_policy",
    "pid_aw_step",
    "plant_output",
    "plant_step",
    "rk4_step",
    "rms",
    "seeded_noise",
    "simulate",
    "trace_frame",
]

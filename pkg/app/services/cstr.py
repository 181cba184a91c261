"""
Continuously stirred tank reactor
Plant model, PI closed-loop linearization and the MPC/NMPC policies that
reproduce the PI law near the operating point
"""

import logging
from typing import Dict, Optional

import numpy as np
import scipy.signal as ssig

from app.core.exceptions import DimensionMismatch, NumericalFailure
from app.models.mpc import ConstraintSet, MpcProblem
from app.models.realization import PidParams
from app.models.sim import CstrDesign, CstrParams, Integrator, PlantKind, PlantSpec
from app.models.system import LinearDynamics, StageCost, TimeDomain
from app.services.mpc import MpcController, NmpcController, build_mpc
from app.services.numerics import discretize_zoh, eigenvalues, finite_difference_jacobian
from app.services.simulation import rk4_step

logger = logging.getLogger(__name__)

T_INDEX, CA_INDEX, I_INDEX = 0, 1, 2


def reaction_rate(T: float, params: CstrParams) -> float:
    return params.K0 * np.exp(params.arrhenius_sign * params.E_R / T)


def steady_concentration(T: float, params: CstrParams) -> float:
    """C_A with zero concentration derivative at temperature T"""
    dilution = params.q / params.V
    return dilution * params.C_Af / (dilution + reaction_rate(T, params))


def calibrated_heat_capacity(params: CstrParams) -> float:
    """C_p making (T_s, C_A(T_s)) an equilibrium of the temperature equation under u_s"""
    T, u = params.T_s, params.u_s
    C_A = steady_concentration(T, params)
    heat = params.H_AB * reaction_rate(T, params) * C_A + params.UA / params.V * (u - T)
    flow = params.rho * params.q / params.V * (params.T_f - T)
    if flow == 0.0:
        raise DimensionMismatch("heat capacity cannot be calibrated with T_f = T_s or q = 0")
    return -heat / flow


def with_heat_capacity(params: CstrParams) -> CstrParams:
    if params.C_p is not None:
        return params
    C_p = calibrated_heat_capacity(params)
    logger.info(f"Calibrated CSTR heat capacity C_p = {C_p:.6g}")
    return params.model_copy(update={"C_p": C_p})


def cstr_rhs(x, u, disturbances=None, params: Optional[CstrParams] = None) -> np.ndarray:
    """
    (dT/dt, dC_A/dt) for state (T, C_A) and jacket temperature u

    Disturbances, when given, are (q, C_Af, T_f) and replace the nominal values.
    """
    params = params or CstrParams()
    C_p = params.C_p if params.C_p is not None else calibrated_heat_capacity(params)
    T, C_A = float(x[0]), float(x[1])
    T_c = float(np.atleast_1d(u)[0])
    if T <= 0.0:
        raise DimensionMismatch(f"temperature must be positive, got {T}")
    if disturbances is None:
        q, C_Af, T_f = params.q, params.C_Af, params.T_f
    else:
        q, C_Af, T_f = (float(v) for v in disturbances)

    reaction = reaction_rate(T, params) * C_A
    rho_cp = params.rho * C_p
    dT = q / params.V * (T_f - T) + params.H_AB / rho_cp * reaction + params.UA / (params.V * rho_cp) * (T_c - T)
    dC_A = q / params.V * (C_Af - C_A) - reaction
    return np.array([dT, dC_A])


def cstr_plant(params: Optional[CstrParams] = None, disturbance=None) -> PlantSpec:
    params = with_heat_capacity(params or CstrParams())
    return PlantSpec(
        kind=PlantKind.NONLINEAR_CT,
        ts=params.ts,
        rhs=lambda x, u, d: cstr_rhs(x, u, d, params),
        output=lambda x: np.array([x[T_INDEX]]),
        integrator=Integrator.RK4,
        substeps=params.substeps,
        disturbance=disturbance,
    )


def cstr_pid(params: CstrParams) -> PidParams:
    return PidParams(Kp=params.Kp, Ki=params.Ki, ts=params.ts, Kaw=params.Kaw, u_lb=params.u_lb, u_ub=params.u_ub)


def operating_point(params: CstrParams) -> np.ndarray:
    """(T_s, C_A_s, I_s) with the integral holding the steady input"""
    return np.array([params.T_s, steady_concentration(params.T_s, params), params.u_s / params.Ki])


# Linearization and design

def _open_loop_rhs(params: CstrParams):
    """Plant plus integral state: x = (T, C_A, I), w = (x, u, r)"""
    def f(w):
        x, u, r = w[:3], w[3], w[4]
        return np.concatenate([cstr_rhs(x[:2], u, None, params), [r - x[T_INDEX]]])
    return f


def _pi_closed_loop_rhs(params: CstrParams):
    """Unsaturated PI loop: u = Kp (r - T) + Ki I"""
    open_loop = _open_loop_rhs(params)

    def f(w):
        x, r = w[:3], w[3]
        u = params.Kp * (r - x[T_INDEX]) + params.Ki * x[I_INDEX]
        return open_loop(np.concatenate([x, [u, r]]))
    return f


def _zoh(A_c: np.ndarray, B_c: np.ndarray, ts: float):
    discrete = discretize_zoh(LinearDynamics(A=A_c, B=B_c, domain=TimeDomain.CONTINUOUS), ts)
    return discrete.A, discrete.B


def cstr_closed_loop_design(params: Optional[CstrParams] = None) -> CstrDesign:
    """
    Discrete linear models of the plant and of the PI loop at the operating point

    K_bar places eig(A - B K_bar) at eig(A_PI). The anti-windup correction
    ts Kaw (u - u_r + K_bar (x - x_r)) enters the integral row, giving
    (A_aw, B_aw) with A_aw - B_aw K_bar = A - B K_bar.
    """
    params = with_heat_capacity(params or CstrParams())
    x_s = operating_point(params)
    u_s, r_s = params.u_s, params.T_s

    J = finite_difference_jacobian(_open_loop_rhs(params), np.concatenate([x_s, [u_s, r_s]]))
    A_c, B_c, B_rc = J[:, :3], J[:, 3:4], J[:, 4:5]
    J_pi = finite_difference_jacobian(_pi_closed_loop_rhs(params), np.concatenate([x_s, [r_s]]))
    A_pi_c, B_rpi_c = J_pi[:, :3], J_pi[:, 3:4]

    A, B_all = _zoh(A_c, np.hstack([B_c, B_rc]), params.ts)
    B, B_r = B_all[:, :1], B_all[:, 1:]
    A_pi, B_rpi = _zoh(A_pi_c, B_rpi_c, params.ts)

    try:
        K_bar = ssig.place_poles(A, B, eigenvalues(A_pi)).gain_matrix
    except ValueError as e:
        logger.error(f"Pole placement for the CSTR failed: {e}")
        raise NumericalFailure(f"pole placement failed: {e}")

    e3 = np.zeros((3, 1))
    e3[I_INDEX, 0] = 1.0
    A_aw = A + params.ts * params.Kaw * e3 @ K_bar
    B_aw = B + params.ts * params.Kaw * e3

    try:
        dx_r = -np.linalg.solve(A_pi_c, B_rpi_c).reshape(-1)
    except np.linalg.LinAlgError as e:
        logger.error(f"PI closed loop has no unique steady state: {e}")
        raise NumericalFailure("PI closed-loop matrix is singular")
    residual = (A - np.eye(3)) @ dx_r + B_r.reshape(-1)
    b = B.reshape(-1)
    du_r = -float(b @ residual) / float(b @ b)

    return CstrDesign(
        params=params, x_s=x_s, u_s=u_s, r_s=r_s,
        A=A, B=B, B_r=B_r, A_PI=A_pi, B_rPI=B_rpi,
        K_bar=K_bar, A_aw=A_aw, B_aw=B_aw, dx_r=dx_r, du_r=du_r,
    )


def matched_system(design: CstrDesign) -> LinearDynamics:
    return LinearDynamics(A=design.A_aw, B=design.B_aw, domain=TimeDomain.DISCRETE, ts=design.params.ts)


def reference_point(design: CstrDesign, r: float):
    dr = r - design.r_s
    return design.x_s + design.dx_r * dr, design.u_s + design.du_r * dr


def augmented_map(design: CstrDesign, x_r: np.ndarray, u_r: float):
    """
    Sampled plant plus integral with anti-windup, x = (T, C_A, I)

    The integral of e = r - T (r = x_r[0]) is integrated with the plant; the
    anti-windup correction is added once per sample.
    """
    params = design.params
    K_bar = design.K_bar.reshape(-1)
    r = float(x_r[T_INDEX])

    def rhs(z, v, _):
        return np.concatenate([cstr_rhs(z[:2], v, None, params), [r - z[T_INDEX]]])

    def f(x, u):
        u = np.atleast_1d(u)
        x_next = rk4_step(rhs, x, u, None, params.ts, params.substeps)
        x_next[I_INDEX] += params.ts * params.Kaw * (u[0] - u_r + K_bar @ (x - x_r))
        return x_next
    return f


def _deviation_constraints(params: CstrParams, x_r: np.ndarray, u_r: float, T_max: Optional[float]) -> ConstraintSet:
    constraints = ConstraintSet.input_box([params.u_lb - u_r], [params.u_ub - u_r], 3)
    if T_max is not None:
        row = ConstraintSet(C=[[1.0, 0.0, 0.0]], D=[[0.0]], e=[x_r[T_INDEX] - T_max])
        constraints = constraints.stack(row)
    return constraints


class CstrMpcPolicy:
    """
    Linear or nonlinear MPC on (T, C_A, I) in deviation from the reference

    The integral is a controller state: it starts at I_s and is taken from the
    predicted trajectory at every step.
    """

    def __init__(
        self,
        design: CstrDesign,
        cost: StageCost,
        N: int,
        T_max: Optional[float] = None,
        nonlinear: bool = False,
        sqp_iters: Optional[int] = None,
    ):
        self.design = design
        self.cost = cost
        self.N = N
        self.T_max = T_max
        self.nonlinear = nonlinear
        self.sqp_iters = sqp_iters
        self._controllers: Dict[float, object] = {}
        self.integral = float(design.x_s[I_INDEX])

    def reset(self) -> None:
        self.integral = float(self.design.x_s[I_INDEX])

    def _controller(self, r: float):
        if r in self._controllers:
            return self._controllers[r]
        x_r, u_r = reference_point(self.design, r)
        constraints = _deviation_constraints(self.design.params, x_r, u_r, self.T_max)
        if self.nonlinear:
            controller = NmpcController(
                augmented_map(self.design, x_r, u_r), self.cost, constraints, None,
                self.N, x_r, [u_r], self.sqp_iters,
            )
        else:
            problem: MpcProblem = build_mpc(matched_system(self.design), self.cost, constraints, N=self.N)
            controller = MpcController(problem, x_ref=x_r, u_ref=[u_r])
        self._controllers[r] = controller
        return controller

    def control(self, k, x, y=None, r=None):
        setpoint = self.design.r_s if r is None else float(np.atleast_1d(r)[0])
        controller = self._controller(setpoint)
        state = np.array([x[T_INDEX], x[CA_INDEX], self.integral])
        u = controller.control(k, state)
        last = controller.last
        predicted = last.x_traj[1]
        if not self.nonlinear:
            predicted = predicted + controller.x_ref
        self.integral = float(predicted[I_INDEX])
        return u

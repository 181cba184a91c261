"""
Realizations
ARX models and input-output compensators as state-space systems and gains,
PID laws as state feedback, and the tracking augmentations
"""

import logging
from typing import List

import numpy as np

from app.core.exceptions import DimensionMismatch, MissingOutputMap, NotSiso, SamplingMismatch, SingularDcGain
from app.models.realization import ArxModel, IoController, PidParams
from app.models.system import Gain, LinearDynamics, TimeDomain

logger = logging.getLogger(__name__)


def arx_to_ss(model: ArxModel) -> LinearDynamics:
    """
    Nonminimal realization with state (y_k, .., y_{k-nA+1}, u_{k-1}, .., u_{k-nB+1})

    The output y_k is the first state block, so C_y = [I 0 .. 0].
    """
    n_y, n_u, n_a, n_b = model.n_y, model.n_u, model.n_a, model.n_b
    n_yx = n_y * n_a
    n_x = n_yx + n_u * (n_b - 1)
    A = np.zeros((n_x, n_x))
    B = np.zeros((n_x, n_u))

    for i, Ai in enumerate(model.A_coeffs):
        A[:n_y, i * n_y:(i + 1) * n_y] = Ai
    for j, Bj in enumerate(model.B_coeffs[1:]):
        A[:n_y, n_yx + j * n_u:n_yx + (j + 1) * n_u] = Bj
    B[:n_y] = model.B_coeffs[0]

    # output shift register
    for i in range(1, n_a):
        A[i * n_y:(i + 1) * n_y, (i - 1) * n_y:i * n_y] = np.eye(n_y)
    # input shift register
    if n_b >= 2:
        B[n_yx:n_yx + n_u] = np.eye(n_u)
        for j in range(1, n_b - 1):
            A[n_yx + j * n_u:n_yx + (j + 1) * n_u, n_yx + (j - 1) * n_u:n_yx + j * n_u] = np.eye(n_u)

    C_y = np.zeros((n_y, n_x))
    C_y[:, :n_y] = np.eye(n_y)
    return LinearDynamics(A=A, B=B, C_y=C_y, domain=TimeDomain.DISCRETE, ts=model.ts)


def io_controller_to_gain(ctrl: IoController, model: ArxModel) -> Gain:
    """u_k = sum C_i u_{k-i} + sum D_j y_{k-j} as u_k = -K x_k on the arx_to_ss state"""
    n_y, n_u, n_a, n_b = model.n_y, model.n_u, model.n_a, model.n_b
    if len(ctrl.D_coeffs) > n_a or len(ctrl.C_coeffs) > n_b - 1:
        raise DimensionMismatch(
            f"compensator orders ({len(ctrl.C_coeffs)}, {len(ctrl.D_coeffs) - 1}) exceed the realization "
            f"memory ({n_b - 1}, {n_a - 1})"
        )
    n_yx = n_y * n_a
    K = np.zeros((n_u, n_yx + n_u * (n_b - 1)))
    for j, Dj in enumerate(ctrl.D_coeffs):
        if Dj.shape != (n_u, n_y):
            raise DimensionMismatch(f"D_coeffs[{j}] has shape {Dj.shape}, expected {(n_u, n_y)}")
        K[:, j * n_y:(j + 1) * n_y] = -Dj
    for i, Ci in enumerate(ctrl.C_coeffs):
        if Ci.shape != (n_u, n_u):
            raise DimensionMismatch(f"C_coeffs[{i}] has shape {Ci.shape}, expected {(n_u, n_u)}")
        K[:, n_yx + i * n_u:n_yx + (i + 1) * n_u] = -Ci
    return Gain(K=K)


def pid_to_state_feedback(pid: PidParams, model: ArxModel):
    """
    PID on a SISO ARX plant as u = -K x

    State (y_{k-1}, .., y_{k-nA}, yi_{k-1}, u_{k-1}, .., u_{k-nB}) with the integral
    accumulated as yi_k = yi_{k-1} + ts y_k. The gain is
    K_pid * (row of y_k) + Ki on the integral + Kd/ts on y_{k-1}.
    """
    if model.n_y != 1 or model.n_u != 1:
        raise NotSiso(f"plant has {model.n_y} outputs and {model.n_u} inputs")
    if model.ts is not None and abs(model.ts - pid.ts) > 1e-12 * max(1.0, model.ts):
        raise SamplingMismatch(f"PID sampled at {pid.ts}, plant at {model.ts}")

    n_a, n_b = model.n_a, model.n_b
    i_int = n_a
    i_u = n_a + 1
    n_x = n_a + 1 + n_b

    y_row = np.zeros(n_x)
    y_row[:n_a] = [float(Ai[0, 0]) for Ai in model.A_coeffs]
    y_row[i_u:] = [float(Bj[0, 0]) for Bj in model.B_coeffs]

    A = np.zeros((n_x, n_x))
    A[0] = y_row
    for i in range(1, n_a):
        A[i, i - 1] = 1.0
    A[i_int] = pid.ts * y_row
    A[i_int, i_int] += 1.0
    for j in range(1, n_b):
        A[i_u + j, i_u + j - 1] = 1.0
    B = np.zeros((n_x, 1))
    B[i_u, 0] = 1.0

    K = pid.K_pid * y_row
    K[i_int] += pid.Ki
    K[0] += pid.Kd / pid.ts

    C_y = y_row.reshape(1, -1)
    sys = LinearDynamics(A=A, B=B, C_y=C_y, domain=TimeDomain.DISCRETE, ts=pid.ts)
    return sys, Gain(K=K.reshape(1, -1))


def augment_integrator(sys: LinearDynamics) -> LinearDynamics:
    """Extended state (x, q) with q+ = q + y (q' = y in continuous time)"""
    if sys.C_y is None:
        raise MissingOutputMap()
    n_x, n_y = sys.n_x, sys.n_y
    C, D = sys.C_y, sys.output_feedthrough()
    carry = np.eye(n_y) if sys.is_discrete else np.zeros((n_y, n_y))
    A = np.block([[sys.A, np.zeros((n_x, n_y))], [C, carry]])
    B = np.vstack([sys.B, D])
    C_ext = np.hstack([C, np.zeros((n_y, n_y))])
    return LinearDynamics(A=A, B=B, C_y=C_ext, D_y=sys.D_y, domain=sys.domain, ts=sys.ts)


def polynomial_coefficients(model: ArxModel) -> List[np.ndarray]:
    """[I, -A_1, .., -A_nA] of A(z^-1) = I - sum A_i z^-i"""
    return [np.eye(model.n_y)] + [-np.asarray(Ai) for Ai in model.A_coeffs]


def velocity_form(model: ArxModel) -> ArxModel:
    """Error model with (1 - z^-1) A(z^-1) on the output and increments of u as inputs"""
    coeffs = polynomial_coefficients(model)
    product = [coeffs[0]]
    for i in range(1, len(coeffs) + 1):
        current = coeffs[i] if i < len(coeffs) else np.zeros_like(coeffs[0])
        product.append(current - coeffs[i - 1])
    return ArxModel(A_coeffs=[-p for p in product[1:]], B_coeffs=list(model.B_coeffs), ts=model.ts)


def tracking_feedforward(sys: LinearDynamics, K_hat) -> np.ndarray:
    """F with steady-state output r under u = -K x + F r"""
    if sys.C_y is None:
        raise MissingOutputMap()
    K = np.atleast_2d(np.asarray(K_hat.K if isinstance(K_hat, Gain) else K_hat, dtype=float))
    if sys.n_y != sys.n_u:
        raise DimensionMismatch(f"feedforward needs a square system, got {sys.n_y} outputs and {sys.n_u} inputs")
    D = sys.output_feedthrough()
    A_K = sys.closed_loop(K)
    M = np.eye(sys.n_x) - A_K if sys.is_discrete else -A_K
    try:
        dc_gain = (sys.C_y - D @ K) @ np.linalg.solve(M, sys.B) + D
        return np.linalg.inv(dc_gain)
    except np.linalg.LinAlgError as e:
        logger.error(f"Closed-loop DC gain is singular: {e}")
        raise SingularDcGain()

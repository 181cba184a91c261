import numpy as np
import pytest

from app.core.exceptions import DimensionMismatch, MissingOutputMap, NotSiso, SamplingMismatch
from app.models.realization import ArxModel, IoController, PidParams
from app.models.system import LinearDynamics
from app.services import numerics
from app.services.realization import (
    arx_to_ss,
    augment_integrator,
    io_controller_to_gain,
    pid_to_state_feedback,
    tracking_feedforward,
    velocity_form,
)


@pytest.fixture
def second_order_arx():
    return ArxModel(A_coeffs=[[[0.5]], [[0.2]]], B_coeffs=[[[1.0]], [[0.3]]], ts=1.0)


class TestArxRealization:
    def test_shift_register_layout(self, second_order_arx):
        sys = arx_to_ss(second_order_arx)
        np.testing.assert_allclose(sys.A, [[0.5, 0.2, 0.3], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        np.testing.assert_allclose(sys.B, [[1.0], [0.0], [1.0]])
        np.testing.assert_allclose(sys.C_y, [[1.0, 0.0, 0.0]])
        assert sys.ts == 1.0

    def test_reproduces_difference_equation(self, second_order_arx):
        sys = arx_to_ss(second_order_arx)
        u = [1.0, -0.5, 2.0, 0.0, 0.7]
        y = [0.0, 0.0]
        x = np.zeros(3)
        for k, u_k in enumerate(u):
            x = sys.A @ x + sys.B[:, 0] * u_k
            u_prev = u[k - 1] if k >= 1 else 0.0
            y.append(0.5 * y[-1] + 0.2 * y[-2] + u_k + 0.3 * u_prev)
            assert (sys.C_y @ x)[0] == pytest.approx(y[-1])

    def test_io_controller(self, second_order_arx):
        ctrl = IoController(C_coeffs=[[[0.1]]], D_coeffs=[[[-0.4]]])
        np.testing.assert_allclose(io_controller_to_gain(ctrl, second_order_arx).K, [[0.4, 0.0, -0.1]])

    def test_io_controller_order_too_high(self, second_order_arx):
        ctrl = IoController(D_coeffs=[[[1.0]], [[1.0]], [[1.0]]])
        with pytest.raises(DimensionMismatch):
            io_controller_to_gain(ctrl, second_order_arx)

    def test_velocity_form(self, second_order_arx):
        model = velocity_form(second_order_arx)
        np.testing.assert_allclose([a[0, 0] for a in model.A_coeffs], [1.5, -0.3, -0.2])


class TestPidRealization:
    def test_gain_layout(self):
        arx = ArxModel(A_coeffs=[[[1.8]], [[1.2]]], B_coeffs=[[[1.0]]], ts=2.0)
        pid = PidParams(Kp=0.752, Ki=0.248, Kd=2.237, ts=2.0)
        sys, gain = pid_to_state_feedback(pid, arx)
        assert sys.n_x == 4
        np.testing.assert_allclose(gain.K, [[5.3782, 2.8398, 0.248, 2.3665]], atol=1e-3)

    def test_integral_row(self):
        arx = ArxModel(A_coeffs=[[[0.5]]], B_coeffs=[[[2.0]]], ts=0.1)
        sys, _ = pid_to_state_feedback(PidParams(Kp=1.0, Ki=1.0, ts=0.1), arx)
        np.testing.assert_allclose(sys.A[1], [0.05, 1.0, 0.2])

    def test_requires_siso(self):
        arx = ArxModel(A_coeffs=[np.eye(2)], B_coeffs=[np.ones((2, 1))])
        with pytest.raises(NotSiso):
            pid_to_state_feedback(PidParams(Kp=1.0, ts=1.0), arx)

    def test_sampling_mismatch(self, second_order_arx):
        with pytest.raises(SamplingMismatch):
            pid_to_state_feedback(PidParams(Kp=1.0, ts=0.5), second_order_arx)

    def test_bounds_order(self):
        with pytest.raises(DimensionMismatch):
            PidParams(Kp=1.0, ts=1.0, u_lb=1.0, u_ub=0.0)


class TestTracking:
    def test_feedforward_unit_dc_gain(self):
        sys = LinearDynamics(A=[[0.5]], B=[[1.0]], C_y=[[1.0]])
        F = tracking_feedforward(sys, [[0.2]])
        np.testing.assert_allclose(F, [[0.7]])
        x_ss = np.linalg.solve(np.eye(1) - sys.closed_loop([[0.2]]), sys.B @ F @ [3.0])
        np.testing.assert_allclose(sys.C_y @ x_ss, [3.0])

    def test_feedforward_needs_output(self, unstable_scalar):
        with pytest.raises(MissingOutputMap):
            tracking_feedforward(unstable_scalar, [[1.5]])

    def test_integrator_augmentation(self):
        sys = LinearDynamics(A=[[0.5]], B=[[1.0]], C_y=[[2.0]])
        ext = augment_integrator(sys)
        np.testing.assert_allclose(ext.A, [[0.5, 0.0], [2.0, 1.0]])
        np.testing.assert_allclose(ext.B, [[1.0], [0.0]])
        assert numerics.is_stabilizable(ext)

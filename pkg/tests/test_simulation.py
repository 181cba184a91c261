import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import (
    DimensionMismatch,
    InfeasibleInitialState,
    InvalidOption,
    IoError,
    NotPositiveDefinite,
    PlantBlowup,
)
from app.models.mpc import ConstraintSet
from app.models.realization import PidParams
from app.models.sim import (
    ControllerKind,
    ControllerSpec,
    Integrator,
    NmpcSpec,
    NoiseSpec,
    PidState,
    PlantKind,
    PlantSpec,
)
from app.models.system import Gain, LinearDynamics, StageCost, TimeDomain
from app.services import numerics
from app.services.mpc import build_mpc
from app.services.simulation import (
    StaticGainPolicy,
    export_trace_csv,
    pid_aw_step,
    rk4_step,
    rms,
    seeded_noise,
    simulate,
    trace_frame,
)


@pytest.fixture
def scalar_plant():
    return PlantSpec(kind=PlantKind.LINEAR_DT, ts=1.0, sys=LinearDynamics(A=[[2.0]], B=[[1.0]], C_y=[[1.0]]))


def _gain(K):
    return ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=Gain(K=K))


class TestPidLaw:
    def test_unsaturated(self):
        pid = PidParams(Kp=1.0, Ki=2.0, ts=0.1)
        u, state = pid_aw_step(pid, PidState(), 1.0)
        assert u == pytest.approx(1.0)
        assert state.integral == pytest.approx(0.1)
        assert state.prev_error == 1.0

    def test_back_calculation(self):
        pid = PidParams(Kp=1.0, Ki=2.0, ts=0.1, Kaw=1.0, u_lb=-0.5, u_ub=0.5)
        u, state = pid_aw_step(pid, PidState(), 1.0)
        assert u == pytest.approx(0.5)
        assert state.integral == pytest.approx(0.1 * (1.0 - 0.5))

    def test_derivative_after_first_sample(self):
        pid = PidParams(Kp=0.0, Kd=0.2, ts=0.1)
        u, state = pid_aw_step(pid, PidState(), 1.0)
        assert u == pytest.approx(0.0)
        u, _ = pid_aw_step(pid, state, 0.0)
        assert u == pytest.approx(-2.0)


class TestPlants:
    def test_rk4_is_fourth_order(self):
        def error(substeps):
            x = rk4_step(lambda x, u, d: -x, np.array([1.0]), np.zeros(1), None, 1.0, substeps=substeps)
            return abs(x[0] - np.exp(-1.0))

        assert error(20) < 1e-7
        assert 15.0 <= error(10) / error(20) <= 17.0

    def test_zoh_and_rk4_agree(self):
        sys = LinearDynamics(A=[[-1.0, 0.5], [0.0, -2.0]], B=[[0.0], [1.0]], domain=TimeDomain.CONTINUOUS)
        zoh = PlantSpec(kind=PlantKind.LINEAR_CT, ts=0.5, sys=sys, integrator=Integrator.ZOH)
        rk4 = PlantSpec(kind=PlantKind.LINEAR_CT, ts=0.5, sys=sys, integrator=Integrator.RK4, substeps=50)
        controller = _gain([[0.3, 0.1]])
        a = simulate(zoh, controller, [1.0, -1.0], 10)
        b = simulate(rk4, controller, [1.0, -1.0], 10)
        np.testing.assert_allclose(a.x, b.x, atol=1e-7)

    def test_kind_validation(self):
        with pytest.raises(InvalidOption):
            PlantSpec(kind=PlantKind.NONLINEAR_CT, ts=1.0, rhs=lambda x, u, d: x)
        with pytest.raises(InvalidOption):
            PlantSpec(kind=PlantKind.LINEAR_DT, ts=1.0)
        with pytest.raises(InvalidOption):
            PlantSpec(kind=PlantKind.LINEAR_DT, ts=1.0, sys=LinearDynamics(A=[[0.0]], B=[[1.0]], domain=TimeDomain.CONTINUOUS))


class TestClosedLoop:
    def test_static_gain(self, scalar_plant):
        trace = simulate(scalar_plant, _gain([[1.5]]), [1.0], 5)
        np.testing.assert_allclose(trace.x[:, 0], 0.5 ** np.arange(5))
        np.testing.assert_allclose(trace.u[:, 0], -1.5 * 0.5 ** np.arange(5))
        np.testing.assert_allclose(trace.t, np.arange(5.0))
        assert trace.x_final[0] == pytest.approx(0.5 ** 5)
        assert trace.failure is None

    def test_saturation(self, scalar_plant):
        spec = ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=Gain(K=[[1.5]]), u_lb=[-1.0], u_ub=[1.0])
        trace = simulate(scalar_plant, spec, [2.0], 3)
        assert np.all(np.abs(trace.u) <= 1.0)
        assert trace.u[0, 0] == pytest.approx(-1.0)

    def test_policy_object_with_reference(self, scalar_plant):
        policy = StaticGainPolicy(np.array([[1.5]]), F=np.array([[0.5]]))
        trace = simulate(scalar_plant, policy, [0.0], 4, reference=[[1.0]])
        np.testing.assert_allclose(trace.r[:, 0], np.ones(4))
        assert trace.u[0, 0] == pytest.approx(0.5)

    def test_reference_holds_last_row(self):
        spec = ControllerSpec(
            kind=ControllerKind.STATIC_GAIN, gain=Gain(K=[[1.0]]), feedforward=[[1.0]], reference=[[1.0], [2.0]]
        )
        np.testing.assert_allclose(spec.reference_at(7), [2.0])

    def test_feedforward_needs_reference(self):
        with pytest.raises(InvalidOption):
            ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=Gain(K=[[1.0]]), feedforward=[[1.0]])

    def test_blowup(self, scalar_plant):
        with pytest.raises(PlantBlowup):
            simulate(scalar_plant, _gain([[0.0]]), [1.0], 60)

    def test_infeasible_first_step(self):
        sys = LinearDynamics(A=[[1.0]], B=[[1.0]])
        cost = StageCost(Q=[[1.0]], R=[[1.0]], S=[[0.0]])
        problem = build_mpc(sys, cost, ConstraintSet(C=[[1.0]], D=[[0.0]], e=[-1.0]), N=2)
        plant = PlantSpec(kind=PlantKind.LINEAR_DT, ts=1.0, sys=sys)
        with pytest.raises(InfeasibleInitialState):
            simulate(plant, ControllerSpec(kind=ControllerKind.MPC, mpc=problem), [5.0], 3)

    def test_pid_on_output(self, scalar_plant):
        spec = ControllerSpec(kind=ControllerKind.PID_AW, pid=PidParams(Kp=1.5, ts=1.0), reference=[[0.0]])
        trace = simulate(scalar_plant, spec, [1.0], 4)
        np.testing.assert_allclose(trace.x[:, 0], 0.5 ** np.arange(4))

    def test_nmpc_controller(self, scalar_plant):
        sys = scalar_plant.sys
        P, gain = numerics.solve_dare(sys, StageCost(Q=[[1.0]], R=[[1.0]], S=[[0.0]]))
        nmpc = NmpcSpec(
            f=lambda x, u: sys.A @ x + sys.B @ u,
            cost=StageCost(Q=[[1.0]], R=[[1.0]], S=[[0.0]], P=P),
            N=3,
            x_s=[0.0],
            u_s=[0.0],
        )
        trace = simulate(scalar_plant, ControllerSpec(kind=ControllerKind.NMPC, nmpc=nmpc), [1.0], 3)
        np.testing.assert_allclose(trace.u[0], -gain.K[0], atol=1e-6)


class TestNoise:
    def test_seeded_noise_is_reproducible(self):
        a = seeded_noise(7, np.diag([1.0, 4.0]), 1000)
        np.testing.assert_array_equal(a, seeded_noise(7, np.diag([1.0, 4.0]), 1000))
        np.testing.assert_allclose(np.std(a, axis=0), [1.0, 2.0], rtol=0.1)

    def test_negative_covariance(self):
        with pytest.raises(NotPositiveDefinite):
            seeded_noise(0, [[-1.0]], 3)

    def test_runs_are_independent_but_repeatable(self, scalar_plant):
        noise = NoiseSpec(W=[[0.01]], V=[[0.01]], seed=3)
        first = simulate(scalar_plant, _gain([[1.5]]), [0.0], 20, noise=noise)
        again = simulate(scalar_plant, _gain([[1.5]]), [0.0], 20, noise=noise)
        other = simulate(scalar_plant, _gain([[1.5]]), [0.0], 20, noise=noise, run_id=1)
        np.testing.assert_array_equal(first.x, again.x)
        assert not np.allclose(first.w, other.w)
        assert first.seed == 3

    def test_rectified(self, scalar_plant):
        noise = NoiseSpec(W=[[1.0]], seed=1, rectified=True)
        trace = simulate(scalar_plant, _gain([[1.5]]), [0.0], 30, noise=noise)
        assert np.all(trace.w >= 0.0)

    def test_noise_input_shape(self, scalar_plant):
        noise = NoiseSpec(W=np.eye(2), G=[[1.0, 1.0, 1.0]])
        with pytest.raises(DimensionMismatch):
            simulate(scalar_plant, _gain([[1.5]]), [0.0], 3, noise=noise)


class TestMetricsAndExport:
    def test_rms(self, scalar_plant):
        assert rms(np.array([3.0, 4.0])) == pytest.approx(np.sqrt(12.5))
        trace = simulate(scalar_plant, _gain([[1.5]]), [1.0], 2)
        assert rms(trace, "x", 0) == pytest.approx(np.sqrt((1.0 + 0.25) / 2))
        with pytest.raises(DimensionMismatch):
            rms(np.zeros(0))
        with pytest.raises(DimensionMismatch):
            rms(trace, "z")

    def test_trace_columns(self, scalar_plant):
        trace = simulate(scalar_plant, _gain([[1.5]]), [1.0], 3)
        assert list(trace_frame(trace).columns) == ["t", "x1", "u1", "y1"]

    def test_csv_export(self, scalar_plant, tmp_path):
        trace = simulate(scalar_plant, _gain([[1.5]]), [1.0], 3)
        path = export_trace_csv(trace, tmp_path / "trace.csv")
        frame = pd.read_csv(path)
        np.testing.assert_allclose(frame["x1"], [1.0, 0.5, 0.25])
        assert b"\r\n" not in path.read_bytes()

    def test_csv_export_io_error(self, scalar_plant, tmp_path):
        trace = simulate(scalar_plant, _gain([[1.5]]), [1.0], 2)
        with pytest.raises(IoError):
            export_trace_csv(trace, tmp_path / "missing" / "trace.csv")

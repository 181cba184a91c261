import numpy as np
import pytest

from app.core.exceptions import EmptyTerminalSet, InfeasibleInitialState, InfeasibleTrajectory, InvalidOption
from app.models.mpc import ConstraintSet, MpcForm
from app.models.polyhedron import Polyhedron
from app.models.system import StageCost
from app.services import numerics
from app.services.mpc import (
    MpcController,
    NmpcController,
    build_mpc,
    deviation_identity_check,
    export_qp,
    mpc_step,
    nmpc_sqp_step,
)


@pytest.fixture
def lqr(double_integrator, identity_cost_2x1):
    _, gain = numerics.solve_dare(double_integrator, identity_cost_2x1)
    return double_integrator, identity_cost_2x1, gain.K


class TestUnconstrainedMpc:
    def test_first_input_is_lqr(self, lqr):
        sys, cost, K = lqr
        x0 = np.array([2.0, -1.0])
        step = mpc_step(build_mpc(sys, cost, N=5), x0)
        np.testing.assert_allclose(step.u0, -K @ x0, atol=1e-8)
        assert not step.constrained

    def test_condensed_matches_sparse(self, lqr):
        sys, cost, _ = lqr
        box = ConstraintSet.input_box([-0.3], [0.3], sys.n_x)
        x0 = np.array([3.0, 0.0])
        sparse = mpc_step(build_mpc(sys, cost, box, N=6), x0)
        condensed = mpc_step(build_mpc(sys, cost, box, N=6, form=MpcForm.CONDENSED), x0)
        np.testing.assert_allclose(sparse.u_traj, condensed.u_traj, atol=1e-7)
        np.testing.assert_allclose(sparse.x_traj, condensed.x_traj, atol=1e-7)

    def test_deviation_identity(self, lqr):
        sys, cost, K = lqr
        box = ConstraintSet.input_box([-0.3], [0.3], sys.n_x)
        step = mpc_step(build_mpc(sys, cost, box, N=4), [3.0, 0.0])
        check = deviation_identity_check(cost, K, sys, step.x_traj, step.u_traj)
        assert check.gap <= 1e-8 * (1.0 + abs(check.lhs))
        assert check.lhs == pytest.approx(step.objective)

    def test_identity_rejects_inconsistent_trajectory(self, lqr):
        sys, cost, K = lqr
        with pytest.raises(InfeasibleTrajectory):
            deviation_identity_check(cost, K, sys, [[1.0, 0.0], [5.0, 5.0]], [[0.0]])


class TestConstrainedMpc:
    def test_saturated_input(self, lqr):
        sys, cost, _ = lqr
        box = ConstraintSet.input_box([-0.1], [0.1], sys.n_x)
        step = mpc_step(build_mpc(sys, cost, box, N=5), [5.0, 0.0])
        assert step.constrained
        np.testing.assert_allclose(step.u0, [-0.1], atol=1e-8)
        assert np.all(step.stage_multipliers >= 0.0)

    def test_infeasible_initial_state(self, lqr):
        sys, cost, _ = lqr
        state_bound = ConstraintSet(C=[[1.0, 0.0]], D=[[0.0]], e=[-1.0])
        with pytest.raises(InfeasibleInitialState):
            mpc_step(build_mpc(sys, cost, state_bound, N=3), [5.0, 0.0])

    def test_empty_terminal_set(self, lqr):
        sys, cost, _ = lqr
        empty = Polyhedron.from_rows([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
        with pytest.raises(EmptyTerminalSet):
            build_mpc(sys, cost, terminal_set=empty, N=3)

    def test_continuous_model_rejected(self, continuous_integrator):
        cost = StageCost(Q=[[1.0]], R=[[1.0]], S=[[0.0]], P=[[1.0]])
        with pytest.raises(InvalidOption):
            build_mpc(continuous_integrator, cost, N=2)

    def test_export_layout(self, lqr):
        sys, cost, _ = lqr
        text = export_qp(build_mpc(sys, cost, ConstraintSet.input_box([-1.0], [1.0], 2), N=2), [1.0, 0.0])
        lines = text.splitlines()
        assert lines[0] == "QP sparse N=2 nz=8"
        assert lines[1] == "HESSIAN 8 8"
        assert "INEQUALITY 4 8" in lines
        assert "EQUALITY 6 8" in lines
        assert lines[-1] == "END"


class TestControllers:
    def test_reference_offset(self, lqr):
        sys, cost, K = lqr
        controller = MpcController(build_mpc(sys, cost, N=3), x_ref=[1.0, 0.0], u_ref=[0.5])
        u = controller.control(0, np.array([2.0, 0.0]))
        np.testing.assert_allclose(u, 0.5 - K @ np.array([1.0, 0.0]), atol=1e-8)
        assert controller.last is not None
        controller.reset()
        assert controller.last is None


class TestNonlinearMpc:
    def test_linear_model_matches_qp(self, lqr):
        sys, cost, _ = lqr
        problem = build_mpc(sys, cost, ConstraintSet.input_box([-0.2], [0.2], 2), N=5)
        f = lambda x, u: sys.A @ x + sys.B @ u
        x0 = np.array([2.0, 0.5])
        result = nmpc_sqp_step(f, problem.cost, problem.constraints, None, 5, x0, np.zeros(2), np.zeros(1))
        assert result.converged
        np.testing.assert_allclose(result.u0, mpc_step(problem, x0).u0, atol=1e-6)

    def test_fixed_iteration_budget(self, lqr):
        sys, cost, _ = lqr
        problem = build_mpc(sys, cost, N=4)
        f = lambda x, u: sys.A @ x + sys.B @ u + 0.05 * np.array([np.sin(x[0]), 0.0])
        result = nmpc_sqp_step(f, problem.cost, None, None, 4, [1.0, 0.0], np.zeros(2), np.zeros(1), sqp_iters=1)
        assert result.iterations == 1
        assert result.x_traj.shape == (5, 2)

    def test_controller_wraps_step(self, lqr):
        sys, cost, K = lqr
        problem = build_mpc(sys, cost, N=4)
        f = lambda x, u: sys.A @ x + sys.B @ u
        controller = NmpcController(f, problem.cost, None, None, 4, np.zeros(2), np.zeros(1))
        np.testing.assert_allclose(controller.control(0, np.array([1.0, 1.0])), -K @ [1.0, 1.0], atol=1e-6)

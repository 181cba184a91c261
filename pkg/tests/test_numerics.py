import numpy as np
import pytest

from app.core.exceptions import DimensionMismatch, NoConvergence, NotHurwitzStable, NotSchurStable, NotStabilizable
from app.models.system import LinearDynamics, StageCost, TimeDomain
from app.services import numerics


class TestStability:
    def test_spectral_radius(self):
        assert numerics.spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9)

    def test_schur_and_hurwitz(self):
        assert numerics.is_schur([[0.5]])
        assert not numerics.is_schur([[1.0]])
        assert numerics.is_hurwitz([[-0.1]])
        assert not numerics.is_hurwitz([[0.0]])

    def test_report(self):
        report = numerics.stability_report(np.diag([-0.5, 0.2]), TimeDomain.CONTINUOUS)
        assert report.value == pytest.approx(0.2)
        assert not report.is_stable
        assert numerics.stability_report([[0.5]]).is_stable

    def test_non_square_rejected(self):
        with pytest.raises(DimensionMismatch):
            numerics.eigenvalues(np.ones((2, 3)))

    def test_stabilizability(self):
        sys = LinearDynamics(A=np.diag([2.0, 0.5]), B=[[0.0], [1.0]])
        assert not numerics.is_stabilizable(sys)
        sys = LinearDynamics(A=np.diag([0.9, 2.0]), B=[[0.0], [1.0]])
        assert numerics.is_stabilizable(sys)

    def test_detectability(self):
        assert numerics.is_detectable(np.diag([2.0, 0.5]), [[1.0, 0.0]])
        assert not numerics.is_detectable(np.diag([2.0, 0.5]), [[0.0, 1.0]])


class TestLyapunov:
    def test_discrete_scalar(self):
        np.testing.assert_allclose(numerics.solve_lyapunov_discrete([[0.5]], [[1.0]]), [[4.0 / 3.0]])

    def test_continuous_scalar(self):
        np.testing.assert_allclose(numerics.solve_lyapunov_continuous([[-1.0]], [[1.0]]), [[0.5]])

    def test_discrete_residual(self):
        A = np.array([[0.5, 0.2], [-0.1, 0.7]])
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        P = numerics.solve_lyapunov_discrete(A, Q)
        np.testing.assert_allclose(Q + A.T @ P @ A - P, np.zeros((2, 2)), atol=1e-10)

    def test_residual_bound_ignores_solution_scale(self, monkeypatch):
        exact = numerics.sla.solve_discrete_lyapunov
        # residual 0.75 * 3e-10 exceeds 1e-10 * (1 + |Q|) although |P| > 1
        monkeypatch.setattr(numerics.sla, "solve_discrete_lyapunov", lambda a, q: exact(a, q) + 3e-10)
        with pytest.raises(NoConvergence):
            numerics.solve_lyapunov_discrete([[0.5]], [[1.0]])

    def test_refinement_repairs_first_solve(self, monkeypatch):
        exact = numerics.sla.solve_discrete_lyapunov
        calls = []

        def first_call_off(a, q):
            calls.append(q)
            return exact(a, q) + (1e-6 if len(calls) == 1 else 0.0)

        monkeypatch.setattr(numerics.sla, "solve_discrete_lyapunov", first_call_off)
        P = numerics.solve_lyapunov_discrete([[0.5]], [[1.0]])
        assert len(calls) == 2
        assert abs(1.0 + 0.25 * P[0, 0] - P[0, 0]) <= 2e-10

    def test_unstable_rejected(self):
        with pytest.raises(NotSchurStable):
            numerics.solve_lyapunov_discrete([[1.5]], [[1.0]])
        with pytest.raises(NotHurwitzStable):
            numerics.solve_lyapunov_continuous([[0.5]], [[1.0]])


class TestRiccati:
    def test_dare_scalar_with_zero_state_weight(self, unstable_scalar):
        cost = StageCost(Q=[[0.0]], R=[[1.0]], S=[[0.0]])
        P, gain = numerics.solve_dare(unstable_scalar, cost)
        np.testing.assert_allclose(P, [[3.0]], rtol=1e-8)
        np.testing.assert_allclose(gain.K, [[1.5]], rtol=1e-8)

    def test_dare_with_cross_term(self):
        sys = LinearDynamics(A=[[0.9]], B=[[0.1]])
        cost = StageCost(Q=[[4.0]], R=[[1.0]], S=[[-2.0]])
        P, gain = numerics.solve_dare(sys, cost)
        np.testing.assert_allclose(P, [[21.0]], rtol=1e-6)
        np.testing.assert_allclose(gain.K, [[-0.11 / 1.21]], rtol=1e-6)

    def test_dare_residual_small(self, double_integrator, identity_cost_2x1):
        P, _ = numerics.solve_dare(double_integrator, identity_cost_2x1)
        assert numerics.dare_residual(double_integrator, identity_cost_2x1, P) < 1e-9
        assert numerics.is_schur(double_integrator.closed_loop(numerics.dare_gain(double_integrator, identity_cost_2x1, P)))

    def test_care_scalar(self, continuous_integrator):
        cost = StageCost(Q=[[1.0]], R=[[1.0]], S=[[0.0]])
        P, gain = numerics.solve_riccati(continuous_integrator, cost)
        np.testing.assert_allclose(P, [[1.0]], rtol=1e-8)
        np.testing.assert_allclose(gain.K, [[1.0]], rtol=1e-8)
        P_direct, _ = numerics.solve_care(continuous_integrator, cost)
        np.testing.assert_allclose(P_direct, P)

    def test_not_stabilizable(self):
        sys = LinearDynamics(A=np.diag([2.0, 0.5]), B=[[0.0], [1.0]])
        cost = StageCost(Q=np.eye(2), R=[[1.0]], S=np.zeros((1, 2)))
        with pytest.raises(NotStabilizable):
            numerics.solve_dare(sys, cost)

    def test_cost_dimension_mismatch(self, unstable_scalar, identity_cost_2x1):
        with pytest.raises(DimensionMismatch):
            numerics.solve_dare(unstable_scalar, identity_cost_2x1)


class TestDiscretization:
    def test_zoh_scalar(self):
        sys = LinearDynamics(A=[[-1.0]], B=[[1.0]], domain=TimeDomain.CONTINUOUS)
        d = numerics.discretize_zoh(sys, 1.0)
        np.testing.assert_allclose(d.A, [[np.exp(-1.0)]])
        np.testing.assert_allclose(d.B, [[1.0 - np.exp(-1.0)]])
        assert d.is_discrete and d.ts == 1.0

    def test_zoh_rejects_discrete(self, unstable_scalar):
        with pytest.raises(DimensionMismatch):
            numerics.discretize_zoh(unstable_scalar, 0.1)


class TestLinearization:
    def test_jacobian(self):
        J = numerics.finite_difference_jacobian(lambda x: np.array([x[0] ** 2, x[0] * x[1]]), [1.0, 2.0])
        np.testing.assert_allclose(J, [[2.0, 0.0], [2.0, 1.0]], atol=1e-6)

    def test_linearize_with_constraints(self):
        f = lambda x, u: np.array([x[0] + 0.1 * u[0] ** 2])
        h = lambda x, u: np.array([x[0] - 1.0])
        A, B, C, D, e = numerics.linearize(f, [0.5], [2.0], h)
        np.testing.assert_allclose(A, [[1.0]], atol=1e-8)
        np.testing.assert_allclose(B, [[0.4]], atol=1e-6)
        np.testing.assert_allclose(C, [[1.0]], atol=1e-8)
        np.testing.assert_allclose(D, [[0.0]], atol=1e-8)
        np.testing.assert_allclose(e, [-0.5])

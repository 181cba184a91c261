import numpy as np
import pytest

from app.core.exceptions import NotPositiveDefinite, QpInfeasible
from app.models.mpc import QpStatus, QuadraticProgram
from app.services.qp import kkt_residual, solve_qp


def _qp(G, c, A_in=None, b_in=None, A_eq=None, b_eq=None):
    n = len(c)
    return QuadraticProgram(
        G=G, c=c,
        A_in=np.zeros((0, n)) if A_in is None else A_in,
        b_in=np.zeros(0) if b_in is None else b_in,
        A_eq=np.zeros((0, n)) if A_eq is None else A_eq,
        b_eq=np.zeros(0) if b_eq is None else b_eq,
    )


class TestActiveSet:
    def test_unconstrained(self):
        sol = solve_qp(_qp(np.eye(2), [-1.0, 2.0]))
        np.testing.assert_allclose(sol.z, [1.0, -2.0])
        assert sol.status == QpStatus.OPTIMAL

    def test_active_inequality(self):
        qp = _qp(np.eye(2), [-1.0, -1.0], A_in=[[1.0, 1.0]], b_in=[1.0])
        sol = solve_qp(qp)
        np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-9)
        np.testing.assert_allclose(sol.ineq_multipliers, [0.5], atol=1e-9)
        assert sol.active_set == [0]
        assert kkt_residual(qp, sol.z, sol.ineq_multipliers, sol.eq_multipliers) < 1e-9

    def test_inactive_inequality(self):
        sol = solve_qp(_qp(np.eye(2), [-0.1, -0.1], A_in=[[1.0, 1.0]], b_in=[1.0]))
        np.testing.assert_allclose(sol.z, [0.1, 0.1])
        np.testing.assert_allclose(sol.ineq_multipliers, [0.0])

    def test_equality(self):
        sol = solve_qp(_qp(np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0]))
        np.testing.assert_allclose(sol.z, [1.0, 1.0])
        np.testing.assert_allclose(sol.eq_multipliers, [-1.0])

    def test_infeasible_start_uses_phase_one(self):
        qp = _qp(np.eye(1), [0.0], A_in=[[-1.0]], b_in=[-3.0])
        np.testing.assert_allclose(solve_qp(qp).z, [3.0], atol=1e-9)

    def test_infeasible(self):
        with pytest.raises(QpInfeasible):
            solve_qp(_qp(np.eye(1), [0.0], A_in=[[1.0], [-1.0]], b_in=[-1.0, -1.0]))

    def test_indefinite_hessian(self):
        with pytest.raises(NotPositiveDefinite):
            solve_qp(_qp(np.diag([1.0, -1.0]), [0.0, 0.0]))

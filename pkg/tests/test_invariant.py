import numpy as np
import pytest

from app.core.exceptions import DimensionMismatch, EmptyPolyhedron, LpInfeasible, NotSchurStable
from app.models.polyhedron import Polyhedron
from app.services import invariant
from app.services.examples import pid_io_problem


class TestPolyhedron:
    def test_rows_are_normalized(self):
        poly = Polyhedron.from_rows([[2.0, 0.0], [0.0, -4.0]], [1.0, 2.0])
        np.testing.assert_allclose(poly.F, [[1.0, 0.0], [0.0, -1.0]])
        np.testing.assert_allclose(poly.g, [0.5, 0.5])

    def test_zero_rows(self):
        assert Polyhedron.from_rows([[0.0], [1.0]], [1.0, 2.0]).n_rows == 1
        with pytest.raises(EmptyPolyhedron):
            Polyhedron.from_rows([[0.0]], [-1.0])

    def test_contains(self):
        box = Polyhedron.from_rows(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        assert invariant.contains(box, [0.5, -1.0])
        assert not invariant.contains(box, [1.5, 0.0])

    def test_empty_and_support(self):
        assert invariant.is_empty(Polyhedron.from_rows([[1.0], [-1.0]], [1.0, -2.0]))
        assert invariant.support(Polyhedron.from_rows([[1.0]], [3.0]), [1.0]) == pytest.approx(3.0)
        assert invariant.support(Polyhedron.from_rows([[1.0]], [3.0]), [-1.0]) is None

    def test_redundant_rows_removed(self):
        poly = Polyhedron.from_rows([[1.0], [1.0], [-1.0]], [1.0, 2.0, 1.0])
        reduced = invariant.remove_redundant(poly)
        assert reduced.n_rows == 2
        np.testing.assert_allclose(sorted(reduced.g), [1.0, 1.0])


class TestClosedLoopConstraints:
    def test_input_rows_move_onto_state(self):
        poly = invariant.closed_loop_constraints(C=[[0.0], [0.0]], D=[[1.0], [-1.0]], e=[-2.0, -2.0], K_hat=[[4.0]])
        np.testing.assert_allclose(poly.F, [[-1.0], [1.0]])
        np.testing.assert_allclose(poly.g, [0.5, 0.5])

    def test_shape_check(self):
        with pytest.raises(DimensionMismatch):
            invariant.closed_loop_constraints([[1.0]], [[0.0, 0.0]], [0.0], [[1.0]])


class TestMaximalInvariantSet:
    def test_oscillating_scalar_loop(self):
        # x+ = -0.92 x with x <= 0.7: one propagated row, then finitely determined
        A_K = -0.8 - 0.1 * np.array([[1.0, 1.0, 1.0]]) @ np.array([[0.5], [0.5], [0.2]])
        mpi = invariant.compute_mpi(A_K, Polyhedron.from_rows([[1.0]], [0.7]))
        order = np.argsort(mpi.F[:, 0])
        np.testing.assert_allclose(mpi.F[order, 0], [-1.0, 1.0])
        np.testing.assert_allclose(mpi.g[order], [0.7 / 0.92, 0.7], atol=1e-5)

    def test_invariance(self):
        A_K = np.array([[0.6, 0.4], [-0.3, 0.5]])
        box = Polyhedron.from_rows(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
        mpi = invariant.compute_mpi(A_K, box)
        rng = np.random.default_rng(3)
        for x in rng.uniform(-1.0, 1.0, size=(200, 2)):
            if invariant.contains(mpi, x):
                assert invariant.contains(mpi, A_K @ x, tol=1e-7)

    def test_unstable_loop_rejected(self):
        with pytest.raises(NotSchurStable):
            invariant.compute_mpi([[1.1]], Polyhedron.from_rows([[1.0]], [1.0]))

    def test_unconstrained_is_whole_space(self):
        free = Polyhedron(F=np.zeros((0, 2)), g=np.zeros(0))
        assert invariant.compute_mpi(np.eye(2) * 0.5, free).n_rows == 0

    def test_pid_loop_set_is_invariant(self):
        sys, gain, constraints = pid_io_problem()
        K_hat = gain.K
        A_K = sys.closed_loop(K_hat)
        mpi = invariant.compute_mpi(
            A_K, invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, K_hat)
        )
        assert invariant.contains(mpi, np.zeros(sys.n_x))
        rng = np.random.default_rng(11)
        inside = 0
        for x in rng.uniform(-2.0, 2.0, size=(400, sys.n_x)):
            if invariant.contains(mpi, x):
                inside += 1
                assert invariant.contains(mpi, A_K @ x, tol=1e-7)
        assert inside > 0


class TestSupportFallback:
    def test_infeasible_status_on_nonempty_set_is_unbounded(self, monkeypatch):
        solve = invariant.solve_lp

        def maximize_reports_infeasible(c, F, g, A_eq=None, b_eq=None, maximize=False):
            if maximize:
                raise LpInfeasible()
            return solve(c, F, g, A_eq, b_eq, maximize=maximize)

        monkeypatch.setattr(invariant, "solve_lp", maximize_reports_infeasible)
        assert invariant.support(Polyhedron.from_rows([[1.0]], [3.0]), [-1.0]) is None

    def test_support_on_empty_set(self):
        with pytest.raises(EmptyPolyhedron):
            invariant.support(Polyhedron.from_rows([[1.0], [-1.0]], [1.0, -2.0]), [1.0])

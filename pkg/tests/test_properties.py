"""
Seeded property checks over small batches of random instances
"""

import numpy as np
import pytest

from app.models.base import min_eig
from app.models.estimation import EstimatorState, NoiseModel
from app.models.system import LinearDynamics, StageCost
from app.services import estimation, invariant, matching, numerics
from app.services.examples import GAMMA_K_HAT, gamma_tuning_problem, pid_io_problem
from app.services.mpc import build_mpc, mpc_step


def _random_lqr_instance(rng: np.random.Generator, n_x: int, n_u: int):
    A = rng.normal(size=(n_x, n_x)) / np.sqrt(n_x)
    B = rng.normal(size=(n_x, n_u))
    M = rng.normal(size=(n_x, n_x))
    sys = LinearDynamics(A=A, B=B)
    _, gain = numerics.solve_dare(sys, StageCost(Q=M @ M.T + np.eye(n_x), R=np.eye(n_u), S=np.zeros((n_u, n_x))))
    return sys, gain.K


@pytest.mark.slow
class TestMatchingSoundness:
    @pytest.mark.parametrize("seed", range(12))
    def test_every_formulation_recovers_gain(self, seed):
        rng = np.random.default_rng(seed)
        n_x, n_u = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        sys, K = _random_lqr_instance(rng, n_x=n_x, n_u=n_u)
        assert numerics.is_schur(sys.closed_loop(K))
        bound = 1e-6 * (1.0 + np.linalg.norm(K, np.inf))
        direct = matching.match_direct(sys, K)
        optimized = matching.match_gamma_opt(sys, K)
        results = (
            direct,
            matching.match_indirect(sys, K, np.eye(n_u)),
            optimized,
            matching.match_constructive(sys, K),
        )
        for result in results:
            assert np.max(np.abs(result.K_verified.K - K)) <= bound
            assert min_eig(result.H) > 0.0
            assert min_eig(result.P) > 0.0
        assert optimized.beta == pytest.approx(direct.beta, rel=1e-5)


@pytest.mark.slow
class TestUnconstrainedRegion:
    @pytest.mark.parametrize("N", [1, 5, 20])
    def test_mpc_reproduces_gain_inside_invariant_set(self, N):
        sys, constraints, _ = gamma_tuning_problem()
        cost = matching.match_direct(sys, GAMMA_K_HAT).cost
        mpi = invariant.compute_mpi(
            sys.closed_loop(GAMMA_K_HAT),
            invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, GAMMA_K_HAT),
        )
        problem = build_mpc(sys, cost, constraints, mpi, N=N)
        for x in np.linspace(-0.75, 0.69, 15):
            step = mpc_step(problem, [x])
            np.testing.assert_allclose(step.u0, -GAMMA_K_HAT[:, 0] * x, atol=1e-5)
            assert not step.constrained

    def test_pid_loop_inside_invariant_set(self):
        sys, gain, constraints = pid_io_problem()
        K = gain.K
        cost = matching.match_direct(sys, K).cost
        mpi = invariant.compute_mpi(
            sys.closed_loop(K), invariant.closed_loop_constraints(constraints.C, constraints.D, constraints.e, K)
        )
        problem = build_mpc(sys, cost, constraints, mpi, N=10)
        rng = np.random.default_rng(7)
        samples = [x for x in rng.uniform(-2.0, 2.0, size=(200, sys.n_x)) if invariant.contains(mpi, x)]
        assert samples
        for sample in samples[:10]:
            x = 0.5 * sample
            step = mpc_step(problem, x)
            np.testing.assert_allclose(step.u0, -K @ x, atol=1e-5)
            assert not step.constrained


class TestEstimationDuality:
    @pytest.mark.parametrize("seed", range(5))
    def test_one_step_mhe_is_kalman(self, seed):
        rng = np.random.default_rng(100 + seed)
        n_x, n_y = 3, 2
        A = rng.normal(size=(n_x, n_x)) / np.sqrt(n_x)
        C = rng.normal(size=(n_y, n_x))
        M = rng.normal(size=(n_x, n_x))
        noise = NoiseModel.uncorrelated(M @ M.T + 0.1 * np.eye(n_x), np.eye(n_y))
        P = np.eye(n_x)
        x_hat = np.zeros(n_x)
        for _ in range(10):
            y = rng.normal(size=n_y)
            estimate = estimation.one_step_mhe(A, C, noise, EstimatorState(x_hat=x_hat, P_est=P), y)
            gain, P = estimation.kalman_update(A, C, noise, P)
            x_hat = A @ x_hat - gain.L @ (C @ x_hat - y)
            np.testing.assert_allclose(estimate.x_plus_star, x_hat, atol=1e-8)

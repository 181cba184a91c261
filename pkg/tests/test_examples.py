import numpy as np
import pytest

from app.core.exceptions import UnknownExample
from app.services.examples import examples_list, run_example


class TestRegistry:
    def test_names(self):
        assert examples_list() == [
            "indefinite_scalar",
            "destabilizing_match",
            "gamma_tuning",
            "pid_io",
            "cstr",
            "hinf_mhe",
        ]

    def test_unknown_example(self):
        with pytest.raises(UnknownExample) as e:
            run_example("nope")
        assert e.value.exit_code == 2


class TestScalarExamples:
    def test_indefinite_scalar(self):
        values = run_example("indefinite_scalar").values
        assert values["riccati_P"] == pytest.approx(3.0)
        assert values["riccati_K"] == pytest.approx(1.5)
        assert values["indefinite_Q"] == pytest.approx(4.0)
        assert values["indefinite_S"] == pytest.approx(-2.0)
        assert values["indefinite_R"] == pytest.approx(1.0)
        assert values["gain_error"] > 1.0
        assert values["K_hat_stabilizing"] is False

    def test_destabilizing_match(self):
        values = run_example("destabilizing_match").values
        assert values["closed_loop_eigenvalue"] == pytest.approx(1.1)
        assert values["rejected"] is True
        assert abs(0.9 - 0.1 * values["stabilizing_K"]) < 1.0
        assert values["gain_error"] < 1e-6


class TestGammaTuning:
    @pytest.fixture(scope="class")
    def values(self):
        return run_example("gamma_tuning").values

    def test_identity_weight_spreads_the_correction(self, values):
        np.testing.assert_allclose(values["u_gamma_identity"], [-0.2333, -0.2333, -0.5333], atol=1e-3)

    def test_heavy_weight_protects_second_input(self, values):
        np.testing.assert_allclose(values["u_gamma_weighted"], [-0.5945, 0.4891, -0.8945], atol=1e-3)

    def test_reference_weight_and_direct_conditioning(self, values):
        np.testing.assert_allclose(values["u_reference_H"], [-0.28495, -0.29230, -0.42275], atol=1e-3)
        assert values["direct_beta"] == pytest.approx(22.79, rel=1e-2)

    def test_terminal_constraint_is_active(self, values):
        for name in ("gamma_identity", "gamma_weighted", "direct", "reference_H"):
            assert sum(values[f"u_{name}"]) == pytest.approx(-1.0, abs=1e-6)

    def test_invariant_set(self, values):
        np.testing.assert_allclose(sorted(values["mpi_g"]), [0.7, 0.7 / 0.92], atol=1e-6)


@pytest.mark.slow
class TestEndToEnd:
    def test_pid_io(self):
        result = run_example("pid_io")
        values = result.values
        np.testing.assert_allclose(values["K_hat"], [[5.3782, 2.8398, 0.248, 2.3665]], atol=1e-3)
        assert values["kappa_H"] == pytest.approx(1.698, rel=2e-2)
        assert values["kappa_H_S_zero"] == pytest.approx(1.727, rel=2e-2)
        assert values["kappa_blkdiag_S_zero"] == pytest.approx(158.76, rel=2e-2)
        assert values["kappa_blkdiag_S_free"] == pytest.approx(149.18, rel=2e-2)
        assert values["second_gain_kappa_H"] == pytest.approx(30.49, rel=2e-2)
        assert values["second_gain_S_zero_feasible"] is False
        assert values["max_violation_mpc"] <= 1e-6
        assert values["max_violation_pid"] > 1e-6
        assert set(result.traces) == {"mpc", "pid", "pid_saturated"}
        saturated = result.traces["pid_saturated"]
        assert np.all(np.abs(saturated.u) <= 24.0 + 1e-9)
        quarter = 3 * len(saturated.y) // 4
        assert np.linalg.norm(saturated.y[-1]) >= np.linalg.norm(saturated.y[quarter])

    def test_cstr(self):
        result = run_example("cstr")
        assert result.values["C_p"] == pytest.approx(0.80212, rel=1e-4)
        assert set(result.traces) == {"pi", "mpc", "mpcx", "nmpc"}
        assert result.values["failure_pi"] is None

    def test_hinf_mhe_is_seeded(self):
        first = run_example("hinf_mhe", seed=4).values
        again = run_example("hinf_mhe", seed=4).values
        assert first["gamma_star"] > 0.0
        for name in ("mhe_tuned", "mhe_standard", "hinf", "kalman"):
            assert np.isfinite(first[f"rms_{name}"])
            assert first[f"rms_{name}"] == again[f"rms_{name}"]

    def test_hinf_mhe_design(self):
        values = run_example("hinf_mhe", seed=0).values
        assert values["gamma_star"] == pytest.approx(1.34382, abs=1e-3)
        np.testing.assert_allclose(values["L_hinf"], [[1.43918], [4.59499]], atol=1e-3)
        np.testing.assert_allclose(values["L_kalman"], [[0.68657], [1.52015]], atol=1e-3)
        assert values["tuned_H_inverse"][0][0] == pytest.approx(0.98958, abs=1e-3)

    def test_tuned_mhe_beats_covariance_tuning(self):
        wins = 0
        for seed in range(5):
            values = run_example("hinf_mhe", seed=seed).values
            wins += values["rms_mhe_tuned"] < values["rms_mhe_standard"]
        assert wins >= 4

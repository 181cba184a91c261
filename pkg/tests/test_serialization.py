import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from app.core.exceptions import IoError
from app.models.job import JobConfig, JobKind, JobResult
from app.models.polyhedron import Polyhedron
from app.models.sim import ControllerKind, ControllerSpec, PlantKind, PlantSpec
from app.models.system import Gain, LinearDynamics
from app.services.serialization import export_polyhedron_csv, read_result, write_result
from app.services.simulation import simulate


class TestJobConfig:
    def test_sections_required_per_job(self):
        with pytest.raises(ValidationError):
            JobConfig(schema_version=1, job=JobKind.MPI, plant=LinearDynamics(A=[[1.0]], B=[[1.0]]), gain=[[0.5]])

    def test_realize_needs_one_controller(self):
        with pytest.raises(ValidationError):
            JobConfig(schema_version=1, job=JobKind.REALIZE, arx={"A_coeffs": [[[0.5]]], "B_coeffs": [[[1.0]]]})


class TestResults:
    def test_layout(self, tmp_path):
        plant = PlantSpec(kind=PlantKind.LINEAR_DT, ts=1.0, sys=LinearDynamics(A=[[0.5]], B=[[1.0]]))
        trace = simulate(plant, ControllerSpec(kind=ControllerKind.STATIC_GAIN, gain=Gain(K=[[0.0]])), [1.0], 3)
        result = JobResult(
            job=JobKind.MPC_SIM,
            values={"P": np.eye(2), "beta": np.float64(2.5), "nested": {"g": np.array([1.0, 2.0])}},
            traces={"mpc": trace},
            polyhedra={"terminal_set": Polyhedron(F=[[1.0], [-1.0]], g=[1.0, 2.0])},
        )
        path = write_result(result, tmp_path / "run")
        assert sorted(p.name for p in (tmp_path / "run").iterdir()) == ["mpc.csv", "result.json", "terminal_set.csv"]

        saved = read_result(path)
        assert saved.values == {"P": [[1.0, 0.0], [0.0, 1.0]], "beta": 2.5, "nested": {"g": [1.0, 2.0]}}
        assert saved.traces == {}
        np.testing.assert_allclose(pd.read_csv(tmp_path / "run" / "mpc.csv")["x1"], [1.0, 0.5, 0.25])

    def test_polyhedron_export_io_error(self, tmp_path):
        with pytest.raises(IoError):
            export_polyhedron_csv(Polyhedron(F=[[1.0]], g=[1.0]), tmp_path / "missing" / "set.csv")

    def test_read_missing(self, tmp_path):
        with pytest.raises(IoError):
            read_result(tmp_path / "result.json")

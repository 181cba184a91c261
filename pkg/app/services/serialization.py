"""
Serialization
Job configs in, result JSON and CSV tables out
"""

import json
import logging
from pathlib import Path
from typing import Dict

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.core.exceptions import AppException, ConfigParseError, IoError
from app.models.job import JobConfig, JobResult
from app.models.polyhedron import Polyhedron
from app.services.simulation import export_trace_csv

logger = logging.getLogger(__name__)


def load_job(path) -> JobConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        logger.error(f"Cannot read config {path}: {e}")
        raise IoError(f"cannot read {path}: {e}")
    try:
        return JobConfig.model_validate_json(text)
    except ValidationError as e:
        logger.error(f"Invalid job config {path}: {e.error_count()} errors")
        raise ConfigParseError(f"{path}: {e}")
    except AppException as e:
        logger.error(f"Inconsistent job config {path}: {e.detail}")
        raise ConfigParseError(f"{path}: {e.detail}")


def polyhedron_frame(poly: Polyhedron) -> pd.DataFrame:
    columns: Dict[str, np.ndarray] = {f"f{i + 1}": poly.F[:, i] for i in range(poly.n_x)}
    columns["g"] = poly.g
    return pd.DataFrame(columns)


def export_polyhedron_csv(poly: Polyhedron, path) -> Path:
    path = Path(path)
    try:
        polyhedron_frame(poly).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        logger.error(f"Failed to write polyhedron {path}: {e}")
        raise IoError(f"cannot write {path}: {e}")
    return path


def write_result(result: JobResult, out_dir) -> Path:
    """result.json plus one CSV per trace; returns the JSON path"""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "result.json"
        path.write_text(result.model_dump_json(indent=2))
    except OSError as e:
        logger.error(f"Failed to write results to {out_dir}: {e}")
        raise IoError(f"cannot write to {out_dir}: {e}")
    for name, trace in result.traces.items():
        export_trace_csv(trace, out_dir / f"{name}.csv")
    for name, poly in result.polyhedra.items():
        export_polyhedron_csv(poly, out_dir / f"{name}.csv")
    logger.info(f"Wrote {path} and {len(result.traces)} traces")
    return path


def read_result(path) -> JobResult:
    path = Path(path)
    try:
        return JobResult.model_validate(json.loads(path.read_text()))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}")
    except (ValueError, ValidationError) as e:
        raise ConfigParseError(f"{path}: {e}")

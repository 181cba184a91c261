"""
Controller Matching Toolkit - Command-line entry point
Runs one job per invocation: matching, MPI sets, MPC/MHE simulations,
realizations and the packaged examples
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from app.cli import job_router
from app.core.config import settings
from app.core.exceptions import EXIT_NUMERICAL, EXIT_OK, AppException
from app.services.examples import examples_list
from app.services.serialization import load_job, write_result

# Configure logging
logging.basicConfig(
    level=logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)


def run(config_path, out_dir, seed: Optional[int] = None, tol: Optional[float] = None) -> int:
    """Execute the job in config_path and write its results to out_dir; returns the exit code"""
    try:
        if tol is not None:
            settings.MATCH_TOL = tol
        config = load_job(config_path)
        logger.info(f"Running {config.job.value} job from {config_path}")
        result = job_router[config.job](config, seed=seed)
        write_result(result, Path(out_dir))
    except AppException as e:
        logger.error(f"Job failed: {e}")
        click.echo(str(e), err=True)
        return e.exit_code
    except np.linalg.LinAlgError as e:
        logger.error(f"Linear algebra failure: {e}")
        click.echo(f"[NUMERICAL_ERROR] {e}", err=True)
        return EXIT_NUMERICAL
    return EXIT_OK


@click.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON job configuration")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True,
              help="Directory for result.json and CSV tables")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Overrides the seed in the config")
@click.option("--tol", type=click.FloatRange(min=0.0, min_open=True), default=None,
              help="Gain matching tolerance")
@click.option("--list-examples", is_flag=True, help="Print the packaged example names and exit")
def cli(config_path, out_dir, seed, tol, list_examples):
    if list_examples:
        for name in examples_list():
            click.echo(name)
        sys.exit(EXIT_OK)
    if config_path is None:
        raise click.UsageError("--config is required")
    sys.exit(run(config_path, out_dir, seed=seed, tol=tol))


if __name__ == "__main__":
    cli()

"""
Job dispatch - maps every job kind to its handler
"""

from app.cli.jobs import (
    run_example_job,
    run_match,
    run_mhe_sim,
    run_mpc_sim,
    run_mpi,
    run_realize,
)
from app.models.job import JobKind

job_router = {
    JobKind.MATCH: run_match,
    JobKind.MPI: run_mpi,
    JobKind.MPC_SIM: run_mpc_sim,
    JobKind.MHE_SIM: run_mhe_sim,
    JobKind.REALIZE: run_realize,
    JobKind.EXAMPLE: run_example_job,
}

__all__ = ["job_router"]

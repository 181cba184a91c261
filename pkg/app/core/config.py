"""
Core configuration module
Loads environment variables and numerical tolerances
"""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # App Configuration
    APP_NAME: str = "Controller Matching Toolkit"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Stability / rank tests
    STAB_EPS: float = 1e-9
    RANK_TOL: float = 1e-8
    SYMMETRY_TOL: float = 1e-12

    # Lyapunov / Riccati
    LYAP_RESIDUAL_TOL: float = 1e-10
    DARE_TOL: float = 1e-12
    DARE_MAX_ITER: int = 20000
    RICCATI_RESIDUAL_TOL: float = 1e-9

    # Conic solves
    SDP_SOLVER: str = "CLARABEL"
    SDP_FALLBACK_SOLVER: str = "SCS"
    SDP_TOL: float = 1e-9
    SDP_MAX_ITER: int = 200
    SDP_RESIDUAL_ACCEPT: float = 1e-6

    # Matching
    MATCH_TOL: float = 1e-6
    L1_BETA_SLACK: float = 1e-6

    # Invariant sets
    MPI_MAX_ITER: int = 500
    REDUNDANCY_TOL: float = 1e-9

    # QP / MPC
    QP_TOL: float = 1e-9
    ACTIVE_TOL: float = 1e-7
    QP_MAX_ITER: int = 1000
    NMPC_MAX_ITER: int = 50
    NMPC_STEP_TOL: float = 1e-8
    FD_STEP: float = 1e-6

    # Estimation
    KALMAN_TOL: float = 1e-12
    KALMAN_MAX_ITER: int = 20000
    HINF_MAX_ITER: int = 2000
    HINF_FIXED_POINT_TOL: float = 1e-10
    HINF_BISECTION_TOL: float = 1e-6

    # Simulation
    BLOWUP_NORM: float = 1e12

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"  # Ignore extra fields in .env file


settings = Settings()

# app/config/settings.py

from pydantic_settings import BaseSettings
from typing import List


class Settings(BaseSettings):
    """
    Main configuration. Every value can be overridden from the environment or
    from a `.env` file in the working directory.
    """
    # PROJECT
    PROJECT_NAME: str = "Superlog Toolkit"
    PROJECT_DESCRIPTION: str = (
        "Spectral calculus, spectral ODE and estimate lab for degenerate operators"
    )
    PROJECT_VERSION: str = "0.1.0"

    # ENVIRONMENT
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "info"
    OUTPUT_DIR: str = "output"
    DEFAULT_SEED: int = 20240601

    # TOLERANCES
    POSITIVITY_TOL: float = 1e-10
    EIG_RESIDUAL_TOL: float = 1e-8
    ORTHONORMALITY_TOL: float = 1e-10
    PARTITION_TOL: float = 1e-12
    INEQUALITY_SLACK: float = 1e-10

    # GRID SIZES
    MIN_GRID_POINTS: int = 8
    MAX_DENSE_N: int = 1024

    # EIGENSOLVER
    EIGH_DRIVERS: List[str] = ["evr", "evd", "ev"]
    EIGH_RETRY_ATTEMPTS: int = 3

    # SPECTRAL ODE
    ODE_TOL: float = 1e-12
    ODE_TOL_MIN: float = 1e-12
    ODE_TOL_MAX: float = 1e-4
    ODE_SAMPLES: int = 101
    ODE_RESCALE_THRESHOLD: float = 500.0
    ODE_MAX_DERIVATIVE: int = 4

    # GROWTH CERTIFICATES
    NOMINAL_RADIUS: float = 1.0
    CERTIFICATE_SAMPLES: int = 401

    # ESTIMATE LAB
    EMBEDDING_FACTOR: int = 2
    STABILITY_TOLERANCE: float = 0.25
    TREND_FACTOR: float = 10.0
    TREND_EPSILON: float = 0.1

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True


settings = Settings()

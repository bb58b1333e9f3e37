"""
Configuration settings for cogmask
"""
from typing import List, Union
from pydantic_settings import BaseSettings
from pydantic import field_validator


class Settings(BaseSettings):
    """Runtime settings, overridable through COGMASK_* environment variables"""

    # Application
    APP_NAME: str = "cogmask"
    APP_DESCRIPTION: str = "Revealed-preference IRL and cognition masking for cognitive radars"
    APP_VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "info"
    LOG_FORMAT: str = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

    # Worker pool for sweep cells
    WORKERS: int = 4

    # Numeric tolerances
    DELTA_POS: float = 1e-6
    FEASIBILITY_TOL: float = 1e-8
    CAP_TOL: float = 1e-6
    BUDGET_TOL: float = 1e-7
    GRADIENT_FD_STEP: float = 1e-7

    # Solvers
    LP_METHOD: str = "highs"
    MILP_MAX_NODES: int = 10_000
    ENUMERATION_MAX_PATTERNS: int = 4096

    # Detectors
    QUANTILE_SAMPLES: int = 10_000
    BISECTION_TOL: float = 1e-9
    BISECTION_MAX_ITER: int = 200

    # Artifacts
    OUTPUT_DIR: str = "artifacts"
    CSV_FLOAT_FORMAT: str = "%.10g"
    PLOT_FORMATS: Union[List[str], str] = ["svg"]

    @field_validator('LOG_LEVEL', mode='before')
    @classmethod
    def parse_log_level(cls, v):
        if isinstance(v, str):
            return v.strip().lower()
        return v

    @field_validator('PLOT_FORMATS', mode='before')
    @classmethod
    def parse_plot_formats(cls, v):
        if isinstance(v, str):
            return [fmt.strip() for fmt in v.split(",") if fmt.strip()]
        return v

    @field_validator('WORKERS')
    @classmethod
    def check_workers(cls, v):
        if v < 1:
            raise ValueError("WORKERS must be at least 1")
        return v

    class Config:
        env_file = ".env"
        env_prefix = "COGMASK_"
        case_sensitive = True


# Global settings instance
settings = Settings()

"""
Solver, detector, SPSA and experiment configuration models
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from cogmask.core.config import settings
from cogmask.core.constants import (
    SWEEP_HORIZON_ETA,
    SWEEP_HORIZON_SPSA,
    ETA_GRID,
    LAMBDA_GRID,
    DEFAULT_DIM,
    DEFAULT_NOISE_VARIANCE,
    SIGNIFICANCE_LEVELS,
)


class SolverConfig(BaseModel):
    """Knobs of the exact-penalty projected-gradient masking solver"""
    multi_starts: int = Field(8, ge=1, description="Starting points per run (naive, blended, dithered)")
    max_iterations: int = Field(200, ge=1, description="Projected-gradient iterations per penalty round")
    penalty_initial: float = Field(1.0, gt=0)
    penalty_growth: float = Field(2.0, gt=1)
    max_penalty_rounds: int = Field(16, ge=1)
    initial_step: float = Field(0.05, gt=0)
    min_step: float = Field(1e-12, gt=0)
    armijo: float = Field(1e-4, gt=0, lt=1)
    tolerance: float = Field(1e-10, gt=0)
    dither_scale: float = Field(0.05, ge=0)
    cap_tolerance: float = Field(settings.CAP_TOL, ge=0)
    seed: int = 0

    class Config:
        extra = "forbid"


class DetectorConfig(BaseModel):
    """Significance level and Monte-Carlo sizes of an IRL detector"""
    gamma: float = Field(0.1, gt=0, lt=1, description="Significance level")
    quantile_samples: int = Field(settings.QUANTILE_SAMPLES, ge=1, description="Draws of L for the threshold")
    replicates: int = Field(50, ge=1, description="Frozen noise realizations for conditional estimates")
    epsilon_tolerance: float = Field(settings.BISECTION_TOL, gt=0)
    # L_u: False holds the observed responses fixed, True redraws the observation with each noise sample
    refresh_observed: bool = False

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {"gamma": 0.1, "quantile_samples": 10000, "replicates": 50}
        }


class SpsaConfig(BaseModel):
    """Simultaneous-perturbation masking run"""
    lam: float = Field(1.0, ge=0, alias="lambda", description="Weight of the conditional Type-I estimate")
    iterations: int = Field(2000, ge=1)
    perturbation: float = Field(0.01, gt=0, description="Gradient step delta")
    step: float = Field(0.05, gt=0, description="Response update step")
    schedule: Literal["constant", "harmonic"] = "constant"
    replicates: int = Field(50, ge=1, description="R frozen noise realizations")
    patience: int = Field(500, ge=1, description="Consecutive worsening iterations before the step is halved")
    max_halvings: int = Field(3, ge=0)
    trace_every: int = Field(10, ge=1)
    seed: int = 0

    class Config:
        extra = "forbid"
        populate_by_name = True

    def step_at(self, iteration: int, scale: float = 1.0) -> float:
        base = self.step * scale
        if self.schedule == "harmonic":
            return base / (iteration + 1)
        return base


ExperimentName = Literal[
    "mask-eta-sweep-waveform",
    "mask-eta-sweep-beam",
    "spsa-lambda-sweep",
    "type1-bound",
    "misspec-bound",
    "single-dataset-irl",
]


class ExperimentConfig(BaseModel):
    """One experiment of the harness, as read from a YAML file"""
    experiment: ExperimentName
    seed: int = Field(..., description="Mandatory; no wall-clock default")
    K: Optional[int] = Field(None, ge=1)
    m: int = Field(DEFAULT_DIM, ge=1)
    eta: List[float] = Field(default_factory=lambda: list(ETA_GRID))
    lam: List[float] = Field(default_factory=lambda: list(LAMBDA_GRID), alias="lambda")
    gamma: List[float] = Field(default_factory=lambda: list(SIGNIFICANCE_LEVELS))
    noise_variance: float = Field(DEFAULT_NOISE_VARIANCE, ge=0)
    trials: int = Field(2000, ge=1)
    replicates: int = Field(50, ge=1)
    iterations: int = Field(2000, ge=1)
    seeds: int = Field(5, ge=1, description="Independent seeds per SPSA cell (median reported)")
    quantile_samples: int = Field(settings.QUANTILE_SAMPLES, ge=1)
    utility: Literal["sqrt", "quadratic"] = "sqrt"
    instances: int = Field(200, ge=1, description="Misspecification instances")
    zeta: float = Field(0.01, ge=0, description="Bound on the misspecification norm")
    multi_starts: int = Field(8, ge=1)
    dataset: Optional[str] = None
    output_dir: str = settings.OUTPUT_DIR

    class Config:
        extra = "forbid"
        populate_by_name = True

    @model_validator(mode="after")
    def fill_horizon(self):
        if self.K is None:
            self.K = SWEEP_HORIZON_ETA if self.experiment.startswith("mask-eta-sweep") else SWEEP_HORIZON_SPSA
        return self

    @field_validator("eta", "lam", "gamma")
    @classmethod
    def check_finite(cls, v):
        if any(x != x for x in v):
            raise ValueError("grid entries must be numbers")
        return v

    @classmethod
    def allowed_keys(cls) -> List[str]:
        return sorted(f.alias or name for name, f in cls.model_fields.items())

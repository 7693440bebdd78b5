from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Annotated, Dict, List, Literal, Optional

from config import settings
from models.schemas import BaselineStats, MetricReport, MonteCarloEstimate
from models.study_schemas import Policy

Seed = Annotated[int, Field(ge=0, lt=2**64, description="explicit seed; wall-clock seeding is never used")]


class RunConfig(BaseModel):
    """Parameters shared by every subcommand"""
    model_config = ConfigDict(extra="forbid")

    output_dir: str
    beta: float = Field(settings.DISCOUNT, ge=0.0, lt=1.0)


class SimulateRunConfig(RunConfig):
    """simulate: cohort generation and one study group per policy"""
    n: int = Field(..., ge=1)
    k: int = Field(..., ge=0)
    weeks: int = Field(..., ge=0)
    policies: List[Policy] = Field(..., min_length=1)
    seed: Seed
    cohort_seed: Optional[int] = Field(None, ge=0, lt=2**64)
    prediction_noise: float = Field(0.0, ge=0.0)
    spread: float = Field(0.05, ge=0.0)
    initial_engaging_fraction: float = Field(0.5, ge=0.0, le=1.0)
    cohort_spec: Optional[str] = None
    with_replacement: bool = False

    @model_validator(mode="after")
    def unique_policies(self):
        if len(set(self.policies)) != len(self.policies):
            raise ValueError("each policy may be given once")
        return self


class EvaluateRunConfig(RunConfig):
    """evaluate: predicted models + trajectories -> decision-focused error reports"""
    predicted: str
    trajectories: str
    k: int = Field(..., ge=1)
    seed: Seed
    num_clusters: int = Field(..., ge=1)
    passive_min_support: int = Field(..., ge=1)
    active_min_support: int = Field(..., ge=1)
    smoothing: float = Field(0.0, ge=0.0)
    fallback: Literal["error", "population"] = "error"
    bins: int = Field(..., ge=1)
    epsilon: float = Field(..., gt=0.0)
    weeks_window: Optional[int] = Field(None, ge=1)
    label: Optional[str] = None


class BaselineRunConfig(RunConfig):
    """baseline: closed form, optional Monte Carlo, sigma multiples"""
    n: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    observed: List[float] = Field(default_factory=list)
    expected: Optional[float] = None
    monte_carlo: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)

    @model_validator(mode="after")
    def consistent(self):
        if self.k > self.n:
            raise ValueError(f"k={self.k} exceeds n={self.n}")
        if self.monte_carlo is not None and self.seed is None:
            raise ValueError("--monte-carlo requires an explicit --seed")
        return self


class CompareRunConfig(RunConfig):
    """compare: several evaluation reports side by side"""
    reports: List[str] = Field(..., min_length=1)
    labels: Optional[List[str]] = None

    @model_validator(mode="after")
    def labels_match(self):
        if self.labels is not None and len(self.labels) != len(self.reports):
            raise ValueError("give one label per report")
        return self


class WeekEvaluation(BaseModel):
    """Top-k Whittle index errors of one week"""
    week: int
    n: int
    k: int
    abs_error: float
    norm_error: float
    norm_clamped: int
    kendall: float
    spearman: float
    spearman_median: float
    spearman_histogram: MetricReport


class EvaluationReport(BaseModel):
    """Per-week and cumulative decision-focused evaluation of one study"""
    metadata: Dict
    weeks: List[WeekEvaluation]
    cumulative: Dict[str, MetricReport]
    prediction_errors: Dict[str, MetricReport]


class BaselineReport(BaseModel):
    """Random-policy baseline with optional Monte Carlo cross-check"""
    metadata: Dict
    stats: BaselineStats
    expected_used: float
    monte_carlo: Optional[MonteCarloEstimate] = None
    sigma_multiples: Dict[str, float] = Field(default_factory=dict)

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Annotated, Iterator, List, Literal, Optional, Tuple
import math

from config import settings
from models.schemas import TransitionModel

POLICIES = ("whittle", "random", "round_robin", "csoc")
Policy = Literal["whittle", "random", "round_robin", "csoc"]
Unit = Annotated[float, Field(ge=0.0, le=1.0)]


class Arm(BaseModel):
    """One beneficiary: engaging (state 1) or non-engaging (state 0)"""
    arm_id: str
    true_model: TransitionModel
    predicted_model: TransitionModel
    registration_rank: int = Field(..., ge=0)
    current_state: int = Field(..., ge=0, le=1)
    cluster: Optional[int] = None  # generating cluster, known only for synthetic cohorts


class CohortCluster(BaseModel):
    """Behaviour cluster of a synthetic cohort

    Passive center is (p00, p10); active center is (p01, p11).
    """
    weight: Unit
    passive_center: Tuple[Unit, Unit]
    active_center: Tuple[Unit, Unit]
    spread: float = Field(0.0, ge=0.0)


class CohortSpec(BaseModel):
    """Synthetic cohort definition"""
    n: int = Field(..., ge=0)
    clusters: List[CohortCluster] = Field(..., min_length=1)
    prediction_noise: float = Field(0.0, ge=0.0)
    initial_engaging_fraction: Unit = 0.5

    @field_validator("clusters")
    @classmethod
    def weights_sum_to_one(cls, v):
        total = math.fsum(c.weight for c in v)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"cluster weights must sum to 1, got {total}")
        return v


class StudyConfig(BaseModel):
    """Parameters of one simulated study group"""
    model_config = ConfigDict(frozen=True)

    weeks: int = Field(..., ge=0)
    budget_k: int = Field(..., ge=0)
    policy: Policy
    beta: float = Field(settings.DISCOUNT, ge=0.0, lt=1.0)
    seed: int = Field(..., ge=0, lt=2**64)
    with_replacement: bool = False

    @property
    def effective_budget(self) -> int:
        return 0 if self.policy == "csoc" else self.budget_k


class WeekRecord(BaseModel):
    """One week of a study, columnar and aligned with StudyLog.arm_ids"""
    week: int = Field(..., ge=1)
    selected: List[str]
    states: List[int]
    actions: List[int]
    next_states: List[int]
    engaging_count: int

    def transitions(self, arm_ids: List[str]) -> Iterator[Tuple[str, int, int, int]]:
        for arm_id, s, a, s_next in zip(arm_ids, self.states, self.actions, self.next_states):
            yield arm_id, s, a, s_next

    @property
    def drops(self) -> int:
        """Engaging -> non-engaging transitions this week"""
        return sum(1 for s, s_next in zip(self.states, self.next_states) if s == 1 and s_next == 0)

    @property
    def service_calls(self) -> int:
        return sum(self.actions)


class StudyLog(BaseModel):
    """Week-by-week record of one simulated study group"""
    config: StudyConfig
    rng_algorithm: str
    arm_ids: List[str]
    weeks: List[WeekRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def aligned(self):
        n = len(self.arm_ids)
        for record in self.weeks:
            if not (len(record.states) == len(record.actions) == len(record.next_states) == n):
                raise ValueError(f"week {record.week} is not aligned with {n} arms")
        return self

    @property
    def n_arms(self) -> int:
        return len(self.arm_ids)

    @property
    def engaging_weeks(self) -> int:
        """Cumulative engaging count summed over all weeks"""
        return sum(r.engaging_count for r in self.weeks)

    @property
    def total_drops(self) -> int:
        return sum(r.drops for r in self.weeks)

    @property
    def total_service_calls(self) -> int:
        return sum(r.service_calls for r in self.weeks)

    def cumulative_engaging(self) -> List[int]:
        totals, running = [], 0
        for record in self.weeks:
            running += record.engaging_count
            totals.append(running)
        return totals

    def summary(self) -> dict:
        return {
            "weeks": len(self.weeks),
            "n_arms": self.n_arms,
            "engaging_weeks": self.engaging_weeks,
            "cumulative_engaging": self.cumulative_engaging(),
            "engagement_drops": self.total_drops,
            "service_calls": self.total_service_calls,
        }

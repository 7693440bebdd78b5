from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from typing import Annotated, Dict, List, Optional, Tuple
import math

from exceptions import duplicates

# Cells of a two-state / two-action arm in CSV column order: pSA = P(state S, action A -> 1)
CELLS: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1), (1, 1))
PASSIVE_CELLS: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 0))
ACTIVE_CELLS: Tuple[Tuple[int, int], ...] = ((0, 1), (1, 1))


def cell_name(s: int, a: int) -> str:
    return f"p{s}{a}"


def arm_sort_key(arm_id: str) -> tuple:
    """Natural order for arm identifiers: numeric ids first (by value), then the rest lexicographically"""
    if arm_id.isdigit():
        return (0, int(arm_id), arm_id)
    return (1, 0, arm_id)


Probability = Annotated[float, Field(ge=0.0, le=1.0)]


class TransitionModel(BaseModel):
    """Four independent transition probabilities of one arm

    pSA is the probability of moving to state 1 from state S under action A.
    The complement P(s, a, 0) = 1 - pSA is always derived, never stored.
    """
    model_config = ConfigDict(frozen=True)

    p00: Probability
    p10: Probability
    p01: Probability
    p11: Probability

    def p(self, s: int, a: int) -> float:
        return getattr(self, cell_name(s, a))

    def prob(self, s: int, a: int, s_next: int) -> float:
        """P(s, a, s_next)"""
        p1 = self.p(s, a)
        return p1 if s_next == 1 else 1.0 - p1

    def self_transition(self, s: int, a: int) -> float:
        """P(s, a, s), the quantity compared by the per-arm prediction errors"""
        return self.prob(s, a, s)

    def as_matrix(self) -> List[List[float]]:
        """[[p00, p01], [p10, p11]] indexed [state][action]"""
        return [[self.p00, self.p01], [self.p10, self.p11]]

    def as_row(self) -> List[float]:
        return [self.p00, self.p10, self.p01, self.p11]


class QTable(BaseModel):
    """Q-values of one arm under a passive-action subsidy"""
    model_config = ConfigDict(frozen=True)

    q: List[List[float]] = Field(..., description="q[state][action]")
    subsidy: float
    sweeps: int = 0

    def advantage(self, s: int) -> float:
        """Q(s, 0) - Q(s, 1): positive when the subsidised passive action is preferred"""
        return self.q[s][0] - self.q[s][1]


class WhittleEntry(BaseModel):
    """Whittle index of one arm at its current state"""
    model_config = ConfigDict(frozen=True)

    arm_id: str
    state: int = Field(..., ge=0, le=1)
    index: float

    @field_validator("index")
    @classmethod
    def index_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("Whittle index must be finite")
        return v


class Ranking(BaseModel):
    """Arm identifiers ordered by descending Whittle index; rank() is 1-based"""
    model_config = ConfigDict(frozen=True)

    order: Tuple[str, ...]
    _positions: Dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("order")
    @classmethod
    def distinct_ids(cls, v):
        dup = duplicates(v)
        if dup:
            raise ValueError(f"duplicate arm ids in ranking: {dup[:5]}")
        return v

    def model_post_init(self, __context) -> None:
        self._positions = {arm_id: i + 1 for i, arm_id in enumerate(self.order)}

    def __len__(self) -> int:
        return len(self.order)

    def rank(self, arm_id: str) -> int:
        return self._positions[arm_id]

    def top(self, k: int) -> List[str]:
        return list(self.order[:k])

    def same_arms(self, other: "Ranking") -> bool:
        return len(self) == len(other) and set(self._positions) == set(other._positions)


class Histogram(BaseModel):
    """Equal-width histogram, plot-ready for violin rendering"""
    edges: List[float]
    counts: List[int]


class MetricReport(BaseModel):
    """Distribution summary of one error metric"""
    metric: str
    k: Optional[int] = None
    n: int
    mean: float
    median: float
    per_arm: List[float]
    histogram: Histogram


class NormErrorResult(BaseModel):
    """Normalized Whittle index error with the positions whose denominator was clamped"""
    value: float
    epsilon: float
    clamped_positions: List[int] = Field(default_factory=list, description="1-based positions in the top-k")


class TopKErrors(BaseModel):
    """All four top-k Whittle index errors for one decision step"""
    n: int
    k: int
    abs_error: float
    norm_error: NormErrorResult
    kendall: float
    spearman: float
    spearman_per_arm: List[float]


class BaselineStats(BaseModel):
    """Closed-form error statistics of the purely random selection policy"""
    n: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    expected_error: float
    std_bound: float
    bound_valid: bool

    @model_validator(mode="after")
    def k_within_n(self):
        if self.k > self.n:
            raise ValueError("k must not exceed n")
        return self


class MonteCarloEstimate(BaseModel):
    """Sample mean and standard deviation of the random-policy error"""
    n: int
    k: int
    trials: int
    seed: int
    mean: float
    std: float

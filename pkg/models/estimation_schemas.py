from pydantic import BaseModel, Field, field_validator
from typing import Dict, List, Optional, Tuple

from models.schemas import ACTIVE_CELLS, CELLS, PASSIVE_CELLS, TransitionModel


class TrajectoryLog(BaseModel):
    """Observed weekly (state, action, next_state) triples of one arm

    Range checks happen in count_transitions so errors can name the offending row.
    """
    arm_id: str
    transitions: List[Tuple[int, int, int]] = Field(default_factory=list)
    weeks: Optional[List[int]] = None

    @field_validator("weeks")
    @classmethod
    def weeks_align(cls, v, info):
        if v is not None and len(v) != len(info.data.get("transitions", [])):
            raise ValueError("weeks must have one entry per transition")
        return v

    def is_chained(self) -> bool:
        """next_state of week t equals state of week t+1 wherever weeks are contiguous"""
        weeks = self.weeks or list(range(len(self.transitions)))
        for t in range(len(self.transitions) - 1):
            if weeks[t + 1] == weeks[t] + 1 and self.transitions[t][2] != self.transitions[t + 1][0]:
                return False
        return True


def _zeros() -> List[List[List[int]]]:
    return [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]


class TransitionCounts(BaseModel):
    """Cell counts count[s][a][s'] over the eight (s, a, s') combinations"""
    arm_id: Optional[str] = None
    table: List[List[List[int]]] = Field(default_factory=_zeros)

    @field_validator("table")
    @classmethod
    def shape_and_sign(cls, v):
        if len(v) != 2 or any(len(row) != 2 or any(len(cell) != 2 for cell in row) for row in v):
            raise ValueError("count table must have shape 2x2x2")
        if any(c < 0 for row in v for cell in row for c in cell):
            raise ValueError("counts must be non-negative")
        return v

    def count(self, s: int, a: int, s_next: int) -> int:
        return self.table[s][a][s_next]

    def support(self, s: int, a: int) -> int:
        return self.table[s][a][0] + self.table[s][a][1]

    def __add__(self, other: "TransitionCounts") -> "TransitionCounts":
        table = [[[self.table[s][a][t] + other.table[s][a][t] for t in (0, 1)] for a in (0, 1)] for s in (0, 1)]
        return TransitionCounts(table=table)


class PartialModel(BaseModel):
    """Empirical model with cells that may be missing (None)"""
    arm_id: str
    p: Dict[str, Optional[float]]
    support: Dict[str, int]
    counts: TransitionCounts

    def get(self, s: int, a: int) -> Optional[float]:
        return self.p[f"p{s}{a}"]

    def is_present(self, s: int, a: int) -> bool:
        return self.get(s, a) is not None

    def has_passive(self) -> bool:
        return all(self.is_present(s, a) for s, a in PASSIVE_CELLS)

    def missing_cells(self, cells=CELLS) -> List[Tuple[int, int]]:
        return [(s, a) for s, a in cells if not self.is_present(s, a)]

    def missing_active(self) -> List[Tuple[int, int]]:
        return self.missing_cells(ACTIVE_CELLS)


class ClusterAssignment(BaseModel):
    """Result of clustering arms on their passive transition probabilities"""
    labels: Dict[str, int]
    centroids: List[Tuple[float, float]]
    pooled: List[TransitionCounts]
    active_probabilities: List[Dict[str, Optional[float]]]
    requested_clusters: int
    num_clusters: int
    iterations: int = 0
    inertia_history: List[float] = Field(default_factory=list)
    seed: int
    algorithm: str = "kmeans-lloyd/k-means++"


class ObservedEstimate(BaseModel):
    """Observed (ground truth) models with the cells that were imputed"""
    models: Dict[str, TransitionModel]
    imputed: Dict[str, Dict[str, bool]]
    assignment: ClusterAssignment
    partials: Dict[str, PartialModel]

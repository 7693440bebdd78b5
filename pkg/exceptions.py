"""
Domain errors raised by the services and mapped to exit codes by the CLI.
"""
from typing import Iterable, Optional, Sequence


class WhittleCheckError(Exception):
    """Base class for every error the library raises on purpose"""


class InvalidArgumentError(WhittleCheckError, ValueError):
    """A precondition of an operation does not hold"""


class NonIndexableError(WhittleCheckError):
    """Bisection bracket failed: the subsidy advantage has the same sign at both ends"""

    def __init__(self, arms: Sequence[str], states: Optional[Sequence[int]] = None):
        self.arms = list(arms)
        self.states = list(states) if states is not None else None
        shown = ", ".join(self.arms[:10])
        more = f" (+{len(self.arms) - 10} more)" if len(self.arms) > 10 else ""
        super().__init__(f"Whittle index bracket failure (non-indexable arm?) for: {shown}{more}")


class UnresolvableCellError(WhittleCheckError):
    """A cluster has too little pooled data to estimate a missing cell"""

    def __init__(self, cluster: int, cell: tuple, support: int, min_support: int):
        self.cluster = cluster
        self.cell = cell
        self.support = support
        self.min_support = min_support
        super().__init__(
            f"cluster {cluster} has pooled support {support} < {min_support} for cell "
            f"p(s={cell[0]}, a={cell[1]}); lower the number of clusters or use the population fallback"
        )


class SchemaError(WhittleCheckError):
    """Input file does not follow the expected CSV schema"""

    def __init__(self, message: str, column: Optional[str] = None, row: Optional[int] = None):
        self.column = column
        self.row = row
        where = []
        if column is not None:
            where.append(f"column '{column}'")
        if row is not None:
            where.append(f"row {row}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


def ensure(condition: bool, message: str) -> None:
    """Raise InvalidArgumentError when a precondition fails"""
    if not condition:
        raise InvalidArgumentError(message)


def duplicates(items: Iterable[str]) -> list:
    """Items that occur more than once, in first-seen order"""
    seen, dup = set(), []
    for item in items:
        if item in seen and item not in dup:
            dup.append(item)
        seen.add(item)
    return dup

"""
Error Metrics Service
Per-arm transition probability errors and the top-k Whittle index errors
(absolute, normalized, top-k Kendall Tau, top-k Spearman footrule).
"""
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from config import settings
from exceptions import InvalidArgumentError, ensure
from models.schemas import (
    CELLS,
    Histogram,
    MetricReport,
    NormErrorResult,
    Ranking,
    TopKErrors,
    TransitionModel,
)

logger = logging.getLogger(__name__)


def _self_transition_differences(predicted: TransitionModel, observed: TransitionModel) -> np.ndarray:
    return np.array([predicted.self_transition(s, a) - observed.self_transition(s, a) for s, a in CELLS])


def rmse_error(predicted: TransitionModel, observed: TransitionModel) -> float:
    """sqrt of the mean squared difference of the four self-transition probabilities"""
    diff = _self_transition_differences(predicted, observed)
    return float(np.sqrt(np.mean(diff ** 2)))


def mae_error(predicted: TransitionModel, observed: TransitionModel) -> float:
    """Mean absolute difference of the four self-transition probabilities"""
    diff = _self_transition_differences(predicted, observed)
    return float(np.mean(np.abs(diff)))


def _paired(predicted_wi: Sequence[float], observed_wi: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    if len(predicted_wi) != len(observed_wi):
        raise InvalidArgumentError(
            f"predicted and observed index lists differ in length: {len(predicted_wi)} vs {len(observed_wi)}"
        )
    ensure(len(predicted_wi) > 0, "index lists must not be empty")
    return np.asarray(predicted_wi, dtype=float), np.asarray(observed_wi, dtype=float)


def abs_wi_error(predicted_wi: Sequence[float], observed_wi: Sequence[float]) -> float:
    """(1/k) sum |WI_p - WI_o| over the predicted top-k arms"""
    p, o = _paired(predicted_wi, observed_wi)
    return float(np.mean(np.abs(p - o)))


def norm_wi_error(
    predicted_wi: Sequence[float],
    observed_wi: Sequence[float],
    epsilon: Optional[float] = None,
) -> NormErrorResult:
    """
    (1/k) sum |WI_p - WI_o| / max(|WI_p|, epsilon)

    Positions whose predicted index is smaller than epsilon in magnitude are
    reported in clamped_positions (1-based).
    """
    epsilon = settings.NORM_EPSILON if epsilon is None else epsilon
    if not epsilon > 0:
        raise InvalidArgumentError(f"epsilon must be > 0, got {epsilon}")
    p, o = _paired(predicted_wi, observed_wi)
    magnitude = np.abs(p)
    clamped = np.flatnonzero(magnitude < epsilon)
    if clamped.size:
        logger.warning(f"Normalized index error clamped the denominator at {clamped.size} position(s)")
    value = float(np.mean(np.abs(p - o) / np.maximum(magnitude, epsilon)))
    return NormErrorResult(value=value, epsilon=epsilon, clamped_positions=(clamped + 1).tolist())


def _check_rankings(predicted: Ranking, observed: Ranking, k: int) -> int:
    if not predicted.same_arms(observed):
        raise InvalidArgumentError("predicted and observed rankings cover different arms")
    n = len(predicted)
    ensure(1 <= k <= n, f"k must satisfy 1 <= k <= n={n}, got {k}")
    return n


def observed_ranks_of_top_k(predicted: Ranking, observed: Ranking, k: int) -> np.ndarray:
    """O(s_i) for the first k arms s_1..s_k of the predicted ranking"""
    return np.array([observed.rank(arm_id) for arm_id in predicted.top(k)], dtype=int)


def kendall_topk(predicted: Ranking, observed: Ranking, k: int) -> float:
    """
    Discordant pairs among the predicted top-k, normalized by n(n-1)/2

    Only pairs inside the predicted top-k are compared, never top-k versus the rest.
    """
    n = _check_rankings(predicted, observed, k)
    if n < 2:
        return 0.0
    ranks = observed_ranks_of_top_k(predicted, observed, k)
    # predicted order is i < j; discordant when the observed order is reversed
    discordant = int(np.triu(ranks[:, None] > ranks[None, :], 1).sum())
    return 2.0 * discordant / (n * (n - 1))


def spearman_topk_positions(observed_ranks: np.ndarray, n: int) -> np.ndarray:
    """
    Per-arm footrule terms |i - O(s_i)| / n for rows of observed ranks

    Args:
        observed_ranks: (..., k) array, observed rank of the i-th predicted arm at position i
        n: Number of arms

    Returns:
        Array of the same shape as observed_ranks
    """
    observed_ranks = np.asarray(observed_ranks)
    positions = np.arange(1, observed_ranks.shape[-1] + 1)
    return np.abs(positions - observed_ranks) / n


def spearman_topk(predicted: Ranking, observed: Ranking, k: int) -> Tuple[float, List[float]]:
    """
    Top-k Spearman footrule error

    Returns:
        Tuple of (overall mean over the top-k, per-arm terms |i - O(s_i)| / n)
    """
    n = _check_rankings(predicted, observed, k)
    per_arm = spearman_topk_positions(observed_ranks_of_top_k(predicted, observed, k), n)
    return float(per_arm.mean()), per_arm.tolist()


def top_k_index_errors(
    predicted: Ranking,
    observed: Ranking,
    predicted_wi: dict,
    observed_wi: dict,
    k: int,
    epsilon: Optional[float] = None,
) -> TopKErrors:
    """All four top-k errors for one decision step; index dicts map arm_id -> index"""
    n = _check_rankings(predicted, observed, k)
    top = predicted.top(k)
    p = [predicted_wi[a] for a in top]
    o = [observed_wi[a] for a in top]
    spearman, per_arm = spearman_topk(predicted, observed, k)
    return TopKErrors(
        n=n,
        k=k,
        abs_error=abs_wi_error(p, o),
        norm_error=norm_wi_error(p, o, epsilon),
        kendall=kendall_topk(predicted, observed, k),
        spearman=spearman,
        spearman_per_arm=per_arm,
    )


def lower_median(values: Sequence[float]) -> float:
    """Median using the lower-middle element for even counts"""
    ordered = sorted(values)
    return float(ordered[(len(ordered) - 1) // 2])


def summarize(
    values: Sequence[float],
    bins: Optional[int] = None,
    metric: str = "",
    k: Optional[int] = None,
) -> MetricReport:
    """
    Mean, lower-middle median and an equal-width histogram over [0, max(values)]

    Raises:
        InvalidArgumentError: on empty input or bins < 1
    """
    bins = settings.HISTOGRAM_BINS if bins is None else bins
    if len(values) == 0:
        raise InvalidArgumentError("cannot summarize an empty list of values")
    ensure(bins >= 1, f"bins must be >= 1, got {bins}")
    data = np.asarray(values, dtype=float)
    low = min(0.0, float(data.min()))
    high = float(data.max())
    if high <= low:
        high = low + 1.0
    counts, edges = np.histogram(data, bins=bins, range=(low, high))
    return MetricReport(
        metric=metric,
        k=k,
        n=len(data),
        mean=float(data.mean()),
        median=lower_median(data.tolist()),
        per_arm=data.tolist(),
        histogram=Histogram(edges=edges.tolist(), counts=counts.tolist()),
    )

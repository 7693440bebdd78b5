"""
Random Baseline Service
Closed-form expected top-k Spearman footrule error of the purely random policy,
its standard-deviation bound, a Monte Carlo oracle and the sigma-multiple comparison.
"""
from typing import Optional, Tuple
import logging
import math
import numbers

import numpy as np

from config import settings
from exceptions import InvalidArgumentError, ensure
from models.schemas import BaselineStats, MonteCarloEstimate
from services.metrics import spearman_topk_positions
from services.simulator import make_generator

logger = logging.getLogger(__name__)

# The standard-deviation bound is proven only in this regime
BOUND_MAX_K = 200
BOUND_MIN_N = 3000


def _check_nk(n: int, k: int) -> None:
    ensure(isinstance(n, numbers.Integral) and isinstance(k, numbers.Integral), "n and k must be integers")
    if k < 1 or k > n:
        raise InvalidArgumentError(f"need 1 <= k <= n, got n={n}, k={k}")


def expected_random_error(n: int, k: int) -> float:
    """E[E^s] = 1/2 - k/(2n) + (k^2 - 1)/(3n^2)"""
    _check_nk(n, k)
    return 0.5 - k / (2.0 * n) + (k * k - 1) / (3.0 * n * n)


def random_error_std_bound(n: int, k: int) -> Tuple[float, bool]:
    """
    sigma(E^s) <= 1/(2 sqrt(3k)), valid for k <= 200 and n >= 3000

    Returns:
        Tuple of (bound, valid); outside the proven regime the bound is still returned with valid=False
    """
    ensure(isinstance(k, numbers.Integral) and k >= 1, f"k must be >= 1, got {k}")
    bound = 1.0 / (2.0 * math.sqrt(3.0 * k))
    return bound, (k <= BOUND_MAX_K and n >= BOUND_MIN_N)


def baseline_stats(n: int, k: int) -> BaselineStats:
    bound, valid = random_error_std_bound(n, k)
    return BaselineStats(n=n, k=k, expected_error=expected_random_error(n, k), std_bound=bound, bound_valid=valid)


def monte_carlo_random_error(
    n: int,
    k: int,
    trials: int,
    seed: int,
    batch_size: Optional[int] = None,
) -> MonteCarloEstimate:
    """
    Simulate the purely random policy against the identity observed ranking

    Each trial draws the first k entries of a uniformly random permutation of 1..n
    (the predicted top-k) and scores them with the top-k Spearman footrule. Batches
    use independent streams spawned from the seed and results are reduced in batch
    order, so the estimate does not depend on how batches are scheduled.
    """
    _check_nk(n, k)
    ensure(trials >= 1, f"trials must be >= 1, got {trials}")
    ensure(seed >= 0, f"seed must be non-negative, got {seed}")
    batch_size = batch_size or settings.MONTE_CARLO_BATCH
    num_batches = math.ceil(trials / batch_size)
    streams = np.random.SeedSequence(seed).spawn(num_batches)

    errors = np.empty(trials)
    for b, stream in enumerate(streams):
        rng = make_generator(stream)
        start = b * batch_size
        stop = min(trials, start + batch_size)
        # observed rank of the arm at predicted position i (observed order is the identity)
        ranks = np.stack([rng.choice(n, size=k, replace=False) + 1 for _ in range(stop - start)])
        errors[start:stop] = spearman_topk_positions(ranks, n).mean(axis=1)

    mean = float(errors.mean())
    std = float(errors.std(ddof=1)) if trials > 1 else 0.0
    logger.info(f"Monte Carlo random baseline n={n} k={k}: mean={mean:.6f} std={std:.6f} over {trials} trials")
    return MonteCarloEstimate(n=n, k=k, trials=trials, seed=seed, mean=mean, std=std)


def sigma_multiples_from(observed_error: float, expected_error: float, std_bound: float) -> float:
    """c = (expected - observed) / std_bound; positive c means better than random"""
    ensure(math.isfinite(observed_error), "observed error must be finite")
    ensure(std_bound > 0, f"std_bound must be > 0, got {std_bound}")
    return (expected_error - observed_error) / std_bound


def sigma_multiples(observed_error: float, n: int, k: int) -> float:
    """How many bound-standard-deviations observed_error lies below the random expectation"""
    bound, _ = random_error_std_bound(n, k)
    return sigma_multiples_from(observed_error, expected_random_error(n, k), bound)

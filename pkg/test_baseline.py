"""
Unit Tests for the Random-Policy Baseline
Tests the closed-form expectation against exhaustive enumeration and Monte Carlo,
the standard-deviation bound and the sigma-multiple comparison
"""
import itertools
import math

import numpy as np
import pytest

from exceptions import InvalidArgumentError
from services.baseline import (
    baseline_stats,
    expected_random_error,
    monte_carlo_random_error,
    random_error_std_bound,
    sigma_multiples,
    sigma_multiples_from,
)
from services.metrics import spearman_topk_positions


def test_expected_error_values():
    assert expected_random_error(100, 1) == pytest.approx(0.495, abs=1e-12)
    assert expected_random_error(3000, 200) == pytest.approx(0.468148, abs=1e-6)
    # k = 1 reduces to (n - 1) / (2n)
    for n in (1, 2, 7, 1000):
        assert expected_random_error(n, 1) == pytest.approx((n - 1) / (2 * n), abs=1e-12)


@pytest.mark.parametrize("n,k", [(0, 0), (5, 0), (5, 6), (5, -1)])
def test_expected_error_invalid(n, k):
    with pytest.raises(InvalidArgumentError):
        expected_random_error(n, k)


def test_expected_error_rejects_non_integers():
    with pytest.raises(InvalidArgumentError):
        expected_random_error(10.5, 2)


def test_expected_error_accepts_numpy_integers():
    assert expected_random_error(np.int64(100), np.int32(1)) == pytest.approx(0.495)


@pytest.mark.parametrize("n", range(1, 8))
def test_expected_error_matches_exhaustive_enumeration(n):
    """Mean over all n! predicted orders against a fixed observed order"""
    perms = np.array(list(itertools.permutations(range(1, n + 1))))
    for k in range(1, n + 1):
        errors = spearman_topk_positions(perms[:, :k], n).mean(axis=1)
        assert abs(errors.mean() - expected_random_error(n, k)) <= 1e-12


def test_std_bound():
    bound, valid = random_error_std_bound(3000, 200)
    assert bound == pytest.approx(0.0204, abs=1e-4)
    assert bound == pytest.approx(1 / (2 * math.sqrt(600)))
    assert valid
    assert random_error_std_bound(3000, 201)[1] is False
    assert random_error_std_bound(2999, 200)[1] is False
    with pytest.raises(InvalidArgumentError):
        random_error_std_bound(3000, 0)


def test_baseline_stats():
    stats = baseline_stats(3000, 200)
    assert stats.expected_error == pytest.approx(0.468148, abs=1e-6)
    assert stats.std_bound == pytest.approx(0.020412, abs=1e-6)
    assert stats.bound_valid


@pytest.mark.parametrize("n,k", [(3000, 125), (3000, 175), (3000, 200), (10000, 200)])
def test_monte_carlo_agrees_with_closed_form(n, k):
    trials = 100_000
    estimate = monte_carlo_random_error(n, k, trials, seed=1)
    assert abs(estimate.mean - expected_random_error(n, k)) <= 4 * estimate.std / math.sqrt(trials)
    assert estimate.std <= random_error_std_bound(n, k)[0] + 1e-3


def test_monte_carlo_is_reproducible():
    first = monte_carlo_random_error(500, 20, 3000, seed=9, batch_size=700)
    second = monte_carlo_random_error(500, 20, 3000, seed=9, batch_size=700)
    assert first == second
    assert monte_carlo_random_error(500, 20, 3000, seed=10, batch_size=700).mean != first.mean


def test_monte_carlo_single_trial():
    estimate = monte_carlo_random_error(50, 5, 1, seed=0)
    assert estimate.trials == 1
    assert estimate.std == 0.0


def test_monte_carlo_invalid():
    with pytest.raises(InvalidArgumentError):
        monte_carlo_random_error(50, 5, 0, seed=0)
    with pytest.raises(InvalidArgumentError):
        monte_carlo_random_error(50, 51, 10, seed=0)


@pytest.mark.parametrize("observed,expected,c", [
    (0.436, 0.495, 2.892),
    (0.495, 0.497, 0.098),
    (0.486, 0.493, 0.343),
])
def test_sigma_multiples_from_published_values(observed, expected, c):
    assert sigma_multiples_from(observed, expected, 0.0204) == pytest.approx(c, abs=0.01)
    bound, _ = random_error_std_bound(3000, 200)
    assert sigma_multiples_from(observed, expected, bound) == pytest.approx(c, abs=0.01)


def test_sigma_multiples_closed_form():
    expected = expected_random_error(3000, 200)
    assert sigma_multiples(expected, 3000, 200) == pytest.approx(0.0)
    # better than random means a positive multiple
    assert sigma_multiples(expected - 0.0204, 3000, 200) > 0.99
    with pytest.raises(InvalidArgumentError):
        sigma_multiples_from(float("nan"), 0.5, 0.02)
    with pytest.raises(InvalidArgumentError):
        sigma_multiples_from(0.4, 0.5, 0.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

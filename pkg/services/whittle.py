"""
Whittle Index Service
Two-state / two-action arms: subsidised Q-values, Whittle indices by bisection,
and top-k index-policy selection.
"""
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from config import settings
from exceptions import InvalidArgumentError, NonIndexableError, duplicates, ensure
from models.schemas import QTable, Ranking, TransitionModel, WhittleEntry, arm_sort_key

logger = logging.getLogger(__name__)

REWARD_CURRENT_STATE = "current_state"
REWARD_NEXT_STATE = "next_state"
REWARD_CONVENTIONS = (REWARD_CURRENT_STATE, REWARD_NEXT_STATE)

# a=0 column receives the subsidy
_PASSIVE_MASK = np.array([[1.0, 0.0], [1.0, 0.0]])
_STATE_REWARD = np.array([[0.0, 0.0], [1.0, 1.0]])


def validate_discount(beta: float) -> float:
    ensure(isinstance(beta, (int, float)) and math.isfinite(beta), f"discount must be a real number, got {beta!r}")
    ensure(0.0 <= beta < 1.0, f"discount must lie in [0, 1), got {beta}")
    return float(beta)


def _resolve(tol: Optional[float], default: float, name: str) -> float:
    value = default if tol is None else tol
    ensure(math.isfinite(value) and value > 0, f"{name} must be > 0, got {value}")
    return float(value)


def _reward_on(reward_on: Optional[str]) -> str:
    value = reward_on or settings.REWARD_ON
    ensure(value in REWARD_CONVENTIONS, f"reward convention must be one of {REWARD_CONVENTIONS}, got {value!r}")
    return value


def models_to_array(models: Sequence[TransitionModel]) -> np.ndarray:
    """Stack models into an (m, 2, 2) array indexed [arm, state, action]"""
    return np.array([m.as_matrix() for m in models], dtype=float).reshape(-1, 2, 2)


def value_iteration(
    p: np.ndarray,
    subsidy: np.ndarray,
    beta: float,
    tol: float,
    max_sweeps: int,
    reward_on: str = REWARD_CURRENT_STATE,
) -> Tuple[np.ndarray, int]:
    """
    Batched value iteration for many arms at once.

    Args:
        p: (m, 2, 2) array, p[i, s, a] = P(s, a, 1) for arm i
        subsidy: (m,) passive subsidy per arm
        beta: discount factor
        tol: stop when successive sweeps differ by less than tol (max norm)
        max_sweeps: sweep cap

    Returns:
        Tuple of (q array of shape (m, 2, 2) indexed [arm, state, action], sweeps used)
    """
    reward = _STATE_REWARD[None, :, :] if reward_on == REWARD_CURRENT_STATE else p
    immediate = reward + subsidy[:, None, None] * _PASSIVE_MASK[None, :, :]
    q = np.zeros_like(p)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        v = q.max(axis=2)
        expected = (1.0 - p) * v[:, 0][:, None, None] + p * v[:, 1][:, None, None]
        q_next = immediate + beta * expected
        delta = np.max(np.abs(q_next - q)) if q.size else 0.0
        q = q_next
        if delta < tol:
            break
    else:
        logger.warning(f"Value iteration hit the sweep cap ({max_sweeps}) before reaching tol={tol}")
    return q, sweeps


def q_values_with_subsidy(
    model: TransitionModel,
    subsidy: float,
    beta: float,
    tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
    reward_on: Optional[str] = None,
) -> QTable:
    """
    Fixed point of Q(s,a) = r(s,a) + subsidy*[a=0] + beta * sum_s' P(s,a,s') max_a' Q(s',a')

    Args:
        model: Transition probabilities of the arm
        subsidy: Passive-action subsidy (lambda)
        beta: Discount factor in [0, 1)
        tol: Max-norm convergence threshold between sweeps

    Returns:
        QTable with q[state][action]
    """
    if not math.isfinite(subsidy):
        raise InvalidArgumentError(f"subsidy must be finite, got {subsidy}")
    beta = validate_discount(beta)
    tol = _resolve(tol, settings.VALUE_ITERATION_TOL, "tol")
    q, sweeps = value_iteration(
        models_to_array([model]),
        np.array([float(subsidy)]),
        beta,
        tol,
        max_sweeps or settings.VALUE_ITERATION_MAX_SWEEPS,
        _reward_on(reward_on),
    )
    return QTable(q=q[0].tolist(), subsidy=float(subsidy), sweeps=sweeps)


def subsidy_bracket(beta: float) -> Tuple[float, float]:
    """Rewards lie in [0, 1], so no subsidy outside +-1/(1-beta) changes the preferred action"""
    bound = 1.0 / (1.0 - beta)
    return -bound, bound


def whittle_indices(
    p: np.ndarray,
    states: np.ndarray,
    beta: float,
    tol: Optional[float] = None,
    vi_tol: Optional[float] = None,
    max_sweeps: Optional[int] = None,
    reward_on: Optional[str] = None,
) -> np.ndarray:
    """
    Whittle indices of many arms by simultaneous bisection on the subsidy.

    Args:
        p: (m, 2, 2) transition array, see models_to_array
        states: (m,) current state of each arm
        beta: Discount factor
        tol: Tolerance on the advantage |Q(s,0) - Q(s,1)| at the returned subsidy

    Returns:
        (m,) array of indices, each within tol*(1-beta) of the indifference subsidy

    Raises:
        NonIndexableError: listing positions whose advantage has the same sign at both bracket ends
    """
    beta = validate_discount(beta)
    tol = _resolve(tol, settings.BISECTION_TOL, "tol")
    vi_tol = _resolve(vi_tol, settings.VALUE_ITERATION_TOL, "vi_tol")
    max_sweeps = max_sweeps or settings.VALUE_ITERATION_MAX_SWEEPS
    reward_on = _reward_on(reward_on)

    p = np.asarray(p, dtype=float).reshape(-1, 2, 2)
    states = np.asarray(states, dtype=int).reshape(-1)
    ensure(len(states) == len(p), "one state per arm is required")
    ensure(bool(np.all((states == 0) | (states == 1))), "states must be 0 or 1")
    m = len(p)
    if m == 0:
        return np.zeros(0)
    rows = np.arange(m)

    def advantage(subsidy: np.ndarray) -> np.ndarray:
        q, _ = value_iteration(p, subsidy, beta, vi_tol, max_sweeps, reward_on)
        return q[rows, states, 0] - q[rows, states, 1]

    low, high = subsidy_bracket(beta)
    lo = np.full(m, low)
    hi = np.full(m, high)
    g_lo = advantage(lo)
    g_hi = advantage(hi)
    failed = np.flatnonzero((g_lo > 0) | (g_hi < 0))
    if failed.size:
        raise NonIndexableError([str(i) for i in failed], states[failed].tolist())

    # the advantage changes by at most 1/(1-beta) per unit of subsidy
    steps = max(0, math.ceil(math.log2((high - low) / (tol * (1.0 - beta)))))
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        active_preferred = advantage(mid) < 0
        lo = np.where(active_preferred, mid, lo)
        hi = np.where(active_preferred, hi, mid)
    return 0.5 * (lo + hi)


def whittle_index(
    model: TransitionModel,
    state: int,
    beta: float,
    tol: Optional[float] = None,
    **kwargs,
) -> float:
    """Whittle index W(state) = inf{lambda : Q_lambda(state, 0) = Q_lambda(state, 1)}"""
    ensure(state in (0, 1), f"state must be 0 or 1, got {state}")
    return float(whittle_indices(models_to_array([model]), np.array([state]), beta, tol, **kwargs)[0])


def whittle_table(
    models: Mapping[str, TransitionModel],
    beta: float,
    **kwargs,
) -> Dict[str, Tuple[float, float]]:
    """
    Indices of every arm in both states, computed in one batch

    Returns:
        Dict arm_id -> (W(0), W(1))
    """
    arm_ids = sorted(models, key=arm_sort_key)
    p = models_to_array([models[a] for a in arm_ids])
    both = np.concatenate([p, p])
    states = np.concatenate([np.zeros(len(p), dtype=int), np.ones(len(p), dtype=int)])
    try:
        values = whittle_indices(both, states, beta, **kwargs)
    except NonIndexableError as exc:
        failed = sorted({arm_ids[int(i) % len(arm_ids)] for i in exc.arms}, key=arm_sort_key)
        raise NonIndexableError(failed) from exc
    half = len(arm_ids)
    return {arm_id: (float(values[i]), float(values[half + i])) for i, arm_id in enumerate(arm_ids)}


def compute_entries(
    models: Mapping[str, TransitionModel],
    states: Mapping[str, int],
    beta: float,
    **kwargs,
) -> List[WhittleEntry]:
    """WhittleEntry per arm at its current state; non-indexable failures name the arms"""
    arm_ids = list(states)
    missing = [a for a in arm_ids if a not in models]
    ensure(not missing, f"no transition model for arms: {missing[:5]}")
    p = models_to_array([models[a] for a in arm_ids])
    s = np.array([states[a] for a in arm_ids], dtype=int)
    try:
        values = whittle_indices(p, s, beta, **kwargs)
    except NonIndexableError as exc:
        raise NonIndexableError([arm_ids[int(i)] for i in exc.arms], exc.states) from exc
    return [WhittleEntry(arm_id=a, state=int(s[i]), index=float(values[i])) for i, a in enumerate(arm_ids)]


def rank_by_index(entries: Sequence[WhittleEntry]) -> Ranking:
    """Descending index order; ties broken by ascending arm id"""
    dup = duplicates(e.arm_id for e in entries)
    if dup:
        raise InvalidArgumentError(f"duplicate arm ids: {dup[:5]}")
    ordered = sorted(entries, key=lambda e: (-e.index, arm_sort_key(e.arm_id)))
    return Ranking(order=tuple(e.arm_id for e in ordered))


def select_top_k(ranking: Ranking, k: int) -> List[str]:
    """First min(k, n) arms of the ranking"""
    ensure(k >= 0, f"k must be >= 0, got {k}")
    return ranking.top(k)

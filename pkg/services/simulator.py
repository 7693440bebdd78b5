"""
Study Simulator Service
Synthetic cohorts and multi-week intervention studies under the Whittle,
uniformly random, round robin and no-action (CSOC) policies.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np

from config import settings
from exceptions import InvalidArgumentError, ensure
from models.schemas import TransitionModel, WhittleEntry, arm_sort_key
from models.study_schemas import Arm, CohortCluster, CohortSpec, StudyConfig, StudyLog, WeekRecord
from services.whittle import models_to_array, rank_by_index, select_top_k, whittle_table

logger = logging.getLogger(__name__)


def make_generator(seed) -> np.random.Generator:
    """Seeded generator using the configured bit generator (PCG64 by default)"""
    bit_generator = getattr(np.random, settings.RNG_ALGORITHM)
    return np.random.Generator(bit_generator(seed))


def default_cohort_spec(
    n: int,
    prediction_noise: float = 0.0,
    spread: float = 0.05,
    initial_engaging_fraction: float = 0.5,
) -> CohortSpec:
    """
    Two behaviour clusters where a service call always helps:
    a low-engagement group that responds strongly to calls and a
    high-engagement group that mostly needs calls to recover.
    """
    return CohortSpec(
        n=n,
        clusters=[
            CohortCluster(weight=0.5, passive_center=(0.1, 0.5), active_center=(0.6, 0.9), spread=spread),
            CohortCluster(weight=0.5, passive_center=(0.3, 0.8), active_center=(0.5, 0.95), spread=spread),
        ],
        prediction_noise=prediction_noise,
        initial_engaging_fraction=initial_engaging_fraction,
    )


def generate_cohort(spec: CohortSpec, seed: int) -> List[Arm]:
    """
    Draw a synthetic cohort

    Each arm's passive pair (p00, p10) and active pair (p01, p11) is drawn uniformly
    within +-spread of its cluster centers and clamped to [0, 1]. The predicted model
    is the true model perturbed by uniform noise of half-width prediction_noise.
    Deterministic given (spec, seed).
    """
    if not isinstance(spec, CohortSpec):
        raise InvalidArgumentError("spec must be a CohortSpec")
    ensure(seed >= 0, f"seed must be non-negative, got {seed}")
    rng = make_generator(seed)
    n = spec.n
    weights = np.array([c.weight for c in spec.clusters], dtype=float)
    weights = weights / weights.sum()
    labels = rng.choice(len(spec.clusters), size=n, p=weights)

    passive_centers = np.array([c.passive_center for c in spec.clusters], dtype=float)
    active_centers = np.array([c.active_center for c in spec.clusters], dtype=float)
    spreads = np.array([c.spread for c in spec.clusters], dtype=float)[labels][:, None]

    passive = np.clip(passive_centers[labels] + rng.uniform(-1.0, 1.0, (n, 2)) * spreads, 0.0, 1.0)
    active = np.clip(active_centers[labels] + rng.uniform(-1.0, 1.0, (n, 2)) * spreads, 0.0, 1.0)
    # column order p00, p10, p01, p11
    true_rows = np.concatenate([passive, active], axis=1)
    noise = rng.uniform(-1.0, 1.0, (n, 4)) * spec.prediction_noise
    predicted_rows = np.clip(true_rows + noise, 0.0, 1.0)
    engaging = rng.random(n) < spec.initial_engaging_fraction

    arms = []
    for i in range(n):
        t, q = true_rows[i], predicted_rows[i]
        arms.append(Arm(
            arm_id=str(i),
            true_model=TransitionModel(p00=t[0], p10=t[1], p01=t[2], p11=t[3]),
            predicted_model=TransitionModel(p00=q[0], p10=q[1], p01=q[2], p11=q[3]),
            registration_rank=i,
            current_state=int(engaging[i]),
            cluster=int(labels[i]),
        ))
    logger.info(f"Generated cohort of {n} arms across {len(spec.clusters)} clusters")
    return arms


@dataclass
class StudyState:
    """Mutable state carried from week to week"""
    states: np.ndarray
    true_p: np.ndarray
    policy_rng: np.random.Generator
    transition_rng: np.random.Generator
    registration_order: List[int]
    cursor: int = 0
    predicted_indices: Optional[np.ndarray] = None  # (n, 2): W(0), W(1) per arm
    week: int = 0


def init_study_state(arms: Sequence[Arm], config: StudyConfig) -> StudyState:
    """
    Fresh study state. Selection randomness and transition randomness come from two
    independent streams spawned from the seed, so every policy run on the same cohort
    and seed sees the same transition draws.
    """
    policy_seq, transition_seq = np.random.SeedSequence(config.seed).spawn(2)
    predicted = None
    if config.policy == "whittle" and arms:
        table = whittle_table({a.arm_id: a.predicted_model for a in arms}, config.beta)
        predicted = np.array([table[a.arm_id] for a in arms], dtype=float)
    order = sorted(range(len(arms)), key=lambda i: (arms[i].registration_rank, arm_sort_key(arms[i].arm_id)))
    return StudyState(
        states=np.array([a.current_state for a in arms], dtype=int),
        true_p=models_to_array([a.true_model for a in arms]),
        policy_rng=make_generator(policy_seq),
        transition_rng=make_generator(transition_seq),
        registration_order=order,
        predicted_indices=predicted,
    )


def _select(arms: Sequence[Arm], config: StudyConfig, state: StudyState) -> List[int]:
    """Positions of this week's intervention set, in selection order"""
    n = len(arms)
    take = min(config.effective_budget, n)
    if take == 0:
        return []

    if config.policy == "whittle":
        rows = np.arange(n)
        current = state.predicted_indices[rows, state.states]
        entries = [
            WhittleEntry(arm_id=arm.arm_id, state=int(state.states[i]), index=float(current[i]))
            for i, arm in enumerate(arms)
        ]
        position = {arm.arm_id: i for i, arm in enumerate(arms)}
        return [position[a] for a in select_top_k(rank_by_index(entries), take)]

    if config.policy == "random":
        if config.with_replacement:
            draws = state.policy_rng.integers(0, n, size=config.effective_budget)
            return list(dict.fromkeys(int(d) for d in draws))
        return [int(i) for i in state.policy_rng.permutation(n)[:take]]

    if config.policy == "round_robin":
        chosen = [state.registration_order[(state.cursor + j) % n] for j in range(take)]
        state.cursor = (state.cursor + take) % n
        return chosen

    raise InvalidArgumentError(f"unknown policy {config.policy!r}")


def step_week(arms: Sequence[Arm], config: StudyConfig, state: StudyState) -> WeekRecord:
    """
    Advance the study by one week

    Selects the intervention set per policy, acts on the selected arms only,
    samples every arm's next state from its true model and updates the state.
    """
    n = len(arms)
    selected = _select(arms, config, state)
    actions = np.zeros(n, dtype=int)
    actions[selected] = 1

    draws = state.transition_rng.random(n)
    p_engage = state.true_p[np.arange(n), state.states, actions]
    next_states = (draws < p_engage).astype(int)

    state.week += 1
    record = WeekRecord(
        week=state.week,
        selected=[arms[i].arm_id for i in selected],
        states=state.states.tolist(),
        actions=actions.tolist(),
        next_states=next_states.tolist(),
        engaging_count=int(next_states.sum()),
    )
    state.states = next_states
    logger.debug(f"[{config.policy}] week {record.week}: {len(selected)} calls, {record.engaging_count} engaging")
    return record


def run_study(arms: Sequence[Arm], config: StudyConfig) -> StudyLog:
    """Run config.weeks weeks; the input arms are not modified"""
    state = init_study_state(arms, config)
    log = StudyLog(
        config=config,
        rng_algorithm=settings.RNG_ALGORITHM,
        arm_ids=[a.arm_id for a in arms],
    )
    for _ in range(config.weeks):
        log.weeks.append(step_week(arms, config, state))
    logger.info(
        f"Study [{config.policy}] finished: {config.weeks} weeks, {log.engaging_weeks} engaging weeks, "
        f"{log.total_drops} engagement drops"
    )
    return log


def run_groups(arms: Sequence[Arm], configs: Sequence[StudyConfig]) -> Dict[str, StudyLog]:
    """Run several study groups on the same cohort, keyed by policy"""
    policies = [c.policy for c in configs]
    ensure(len(set(policies)) == len(policies), f"each policy may appear once, got {policies}")
    return {c.policy: run_study(arms, c) for c in configs}


def _check_comparable(policy_log: StudyLog, csoc_log: StudyLog) -> None:
    if len(policy_log.weeks) != len(csoc_log.weeks) or policy_log.n_arms != csoc_log.n_arms:
        raise InvalidArgumentError(
            f"logs differ in shape: {len(policy_log.weeks)}x{policy_log.n_arms} vs "
            f"{len(csoc_log.weeks)}x{csoc_log.n_arms} (weeks x arms)"
        )


def engagement_drops_prevented(policy_log: StudyLog, csoc_log: StudyLog, normalize: bool = False) -> float:
    """
    Engaging -> non-engaging transitions avoided relative to the control group

    Args:
        policy_log: Study group that received interventions
        csoc_log: No-intervention control group over the same weeks and cohort size
        normalize: Divide by the policy group's total service calls

    Returns:
        csoc drops - policy drops (per service call when normalized)
    """
    _check_comparable(policy_log, csoc_log)
    prevented = float(csoc_log.total_drops - policy_log.total_drops)
    if not normalize:
        return prevented
    calls = policy_log.total_service_calls
    ensure(calls > 0, "cannot normalize by service calls: the policy log has none")
    return prevented / calls


def cumulative_drops_prevented(policy_log: StudyLog, csoc_log: StudyLog, normalize: bool = False) -> List[float]:
    """Week-by-week cumulative series of engagement drops prevented"""
    _check_comparable(policy_log, csoc_log)
    series, drops, calls = [], 0, 0
    for ours, control in zip(policy_log.weeks, csoc_log.weeks):
        drops += control.drops - ours.drops
        calls += ours.service_calls
        if normalize:
            series.append(drops / calls if calls else 0.0)
        else:
            series.append(float(drops))
    return series

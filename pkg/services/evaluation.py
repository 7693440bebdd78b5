"""
Study Evaluation Service
Decision-focused evaluation of predicted transition models against models
estimated from observed trajectories, week by week over the top-k selections.
"""
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging

import numpy as np

from config import settings
from exceptions import InvalidArgumentError, SchemaError, ensure
from models.estimation_schemas import ObservedEstimate, TrajectoryLog
from models.run_schemas import EvaluationReport, WeekEvaluation
from models.schemas import TransitionModel, WhittleEntry, arm_sort_key
from models.study_schemas import StudyLog, WeekRecord
from services.estimation import estimate_observed_models
from services.metrics import mae_error, rmse_error, spearman_topk_positions, summarize, top_k_index_errors
from services.whittle import rank_by_index, whittle_table

logger = logging.getLogger(__name__)

WEEKLY_COLUMNS = ["week", "n", "k", "abs_error", "norm_error", "kendall", "spearman", "spearman_median"]


def trajectories_from_study(log: StudyLog) -> List[TrajectoryLog]:
    """Per-arm trajectories of a simulated study, as read back from its CSV"""
    rows: Dict[str, list] = {arm_id: [] for arm_id in log.arm_ids}
    weeks: Dict[str, list] = {arm_id: [] for arm_id in log.arm_ids}
    for record in log.weeks:
        for arm_id, s, a, s_next in record.transitions(log.arm_ids):
            rows[arm_id].append((s, a, s_next))
            weeks[arm_id].append(record.week)
    return [
        TrajectoryLog(arm_id=arm_id, transitions=rows[arm_id], weeks=weeks[arm_id])
        for arm_id in sorted(log.arm_ids, key=arm_sort_key)
    ]


def states_by_week(logs: Sequence[TrajectoryLog]) -> Dict[int, Dict[str, int]]:
    """week -> {arm_id: state at the start of that week}"""
    weeks: Dict[int, Dict[str, int]] = defaultdict(dict)
    for log in logs:
        if log.weeks is None:
            raise SchemaError(f"trajectory of arm {log.arm_id} carries no week numbers", column="week")
        for week, (s, _, _) in zip(log.weeks, log.transitions):
            if log.arm_id in weeks[week]:
                raise SchemaError(f"arm {log.arm_id} has two rows for week {week}", column="week")
            weeks[week][log.arm_id] = s
    return dict(weeks)


def _check_arm_sets(predicted: Mapping[str, TransitionModel], logs: Sequence[TrajectoryLog]) -> None:
    observed_ids = {log.arm_id for log in logs}
    missing = sorted(observed_ids - set(predicted), key=arm_sort_key)
    extra = sorted(set(predicted) - observed_ids, key=arm_sort_key)
    if missing:
        raise SchemaError(f"no predicted model for arms: {missing[:10]}", column="arm_id")
    if extra:
        raise SchemaError(f"predicted models for arms without trajectories: {extra[:10]}", column="arm_id")


def _week_entries(table: Mapping[str, Tuple[float, float]], states: Mapping[str, int]) -> List[WhittleEntry]:
    return [WhittleEntry(arm_id=arm_id, state=s, index=table[arm_id][s]) for arm_id, s in states.items()]


def evaluate_study(
    predicted: Mapping[str, TransitionModel],
    logs: Sequence[TrajectoryLog],
    k: Optional[int] = None,
    beta: Optional[float] = None,
    num_clusters: Optional[int] = None,
    seed: int = 0,
    passive_min_support: Optional[int] = None,
    active_min_support: Optional[int] = None,
    smoothing: Optional[float] = None,
    fallback: str = "error",
    weeks_window: Optional[int] = None,
    bins: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> Tuple[EvaluationReport, ObservedEstimate]:
    """
    Evaluate predicted models against observed models estimated from the trajectories

    For every decision week the predicted ranking P and observed ranking O are built
    from the Whittle indices at each arm's state that week, and the four top-k errors
    are computed with k_eff = min(k, arms present that week).

    Args:
        predicted: arm_id -> predicted TransitionModel
        logs: Trajectories with week numbers
        weeks_window: Evaluate only the first weeks_window decision weeks

    Returns:
        Tuple of (EvaluationReport, ObservedEstimate)
    """
    k = settings.TOP_K if k is None else k
    beta = settings.DISCOUNT if beta is None else beta
    ensure(k >= 1, f"k must be >= 1, got {k}")
    logs = list(logs)
    ensure(len(logs) > 0, "no trajectories to evaluate")
    _check_arm_sets(predicted, logs)

    estimate = estimate_observed_models(
        logs,
        num_clusters=num_clusters,
        seed=seed,
        passive_min_support=passive_min_support,
        active_min_support=active_min_support,
        smoothing=smoothing,
        fallback=fallback,
    )
    predicted_table = whittle_table(dict(predicted), beta)
    observed_table = whittle_table(estimate.models, beta)

    by_week = states_by_week(logs)
    week_numbers = sorted(by_week)
    if weeks_window is not None:
        ensure(weeks_window >= 1, f"weeks_window must be >= 1, got {weeks_window}")
        week_numbers = week_numbers[:weeks_window]
    if not week_numbers:
        raise InvalidArgumentError("trajectories contain no decision weeks")

    weekly: List[WeekEvaluation] = []
    all_spearman: List[float] = []
    for week in week_numbers:
        states = by_week[week]
        p_entries = _week_entries(predicted_table, states)
        o_entries = _week_entries(observed_table, states)
        k_eff = min(k, len(states))
        errors = top_k_index_errors(
            rank_by_index(p_entries),
            rank_by_index(o_entries),
            {e.arm_id: e.index for e in p_entries},
            {e.arm_id: e.index for e in o_entries},
            k_eff,
            epsilon,
        )
        spearman_report = summarize(errors.spearman_per_arm, bins, metric="spearman", k=k_eff)
        all_spearman.extend(errors.spearman_per_arm)
        weekly.append(WeekEvaluation(
            week=week,
            n=errors.n,
            k=k_eff,
            abs_error=errors.abs_error,
            norm_error=errors.norm_error.value,
            norm_clamped=len(errors.norm_error.clamped_positions),
            kendall=errors.kendall,
            spearman=errors.spearman,
            spearman_median=spearman_report.median,
            spearman_histogram=spearman_report,
        ))
        logger.debug(f"Week {week}: n={errors.n} k={k_eff} spearman={errors.spearman:.4f}")

    arm_ids = sorted(predicted, key=arm_sort_key)
    cumulative = {
        "spearman": summarize(all_spearman, bins, metric="spearman", k=k),
        "abs_error": summarize([w.abs_error for w in weekly], bins, metric="abs_error", k=k),
        "norm_error": summarize([w.norm_error for w in weekly], bins, metric="norm_error", k=k),
        "kendall": summarize([w.kendall for w in weekly], bins, metric="kendall", k=k),
    }
    prediction_errors = {
        "rmse": summarize([rmse_error(predicted[a], estimate.models[a]) for a in arm_ids], bins, metric="rmse"),
        "mae": summarize([mae_error(predicted[a], estimate.models[a]) for a in arm_ids], bins, metric="mae"),
    }
    imputed_arms = sum(1 for flags in estimate.imputed.values() if any(flags.values()))
    metadata = {
        "tool": settings.APP_NAME,
        "version": settings.APP_VERSION,
        "k": k,
        "beta": beta,
        "reward_on": settings.REWARD_ON,
        "weeks_evaluated": len(weekly),
        "n_arms": len(arm_ids),
        "estimation": {
            "seed": seed,
            "algorithm": estimate.assignment.algorithm,
            "requested_clusters": estimate.assignment.requested_clusters,
            "num_clusters": estimate.assignment.num_clusters,
            "iterations": estimate.assignment.iterations,
            "fallback": fallback,
            "imputed_arms": imputed_arms,
        },
    }
    logger.info(
        f"Evaluated {len(weekly)} weeks over {len(arm_ids)} arms: "
        f"cumulative spearman={cumulative['spearman'].mean:.4f}"
    )
    report = EvaluationReport(
        metadata=metadata,
        weeks=weekly,
        cumulative=cumulative,
        prediction_errors=prediction_errors,
    )
    return report, estimate


def weekly_rows(report: EvaluationReport) -> List[list]:
    """Rows of the weekly table; the last row holds the cumulative means"""
    rows = [
        [w.week, w.n, w.k, w.abs_error, w.norm_error, w.kendall, w.spearman, w.spearman_median]
        for w in report.weeks
    ]
    c = report.cumulative
    rows.append([
        "cumulative",
        report.metadata.get("n_arms", ""),
        report.metadata.get("k", ""),
        c["abs_error"].mean,
        c["norm_error"].mean,
        c["kendall"].mean,
        c["spearman"].mean,
        c["spearman"].median,
    ])
    return rows


def policy_selection_error(
    record: WeekRecord,
    arm_ids: Sequence[str],
    true_models: Mapping[str, TransitionModel],
    beta: Optional[float] = None,
    table: Optional[Mapping[str, Tuple[float, float]]] = None,
) -> float:
    """
    Top-k Spearman error of one week's selections against the true-model ranking

    The selected arms, in selection order, play the role of the predicted top-k.
    Pass a precomputed whittle_table of the true models to score many weeks.
    """
    beta = settings.DISCOUNT if beta is None else beta
    if not record.selected:
        raise InvalidArgumentError(f"week {record.week} selected no arms")
    table = whittle_table(dict(true_models), beta) if table is None else table
    observed = rank_by_index(_week_entries(table, dict(zip(arm_ids, record.states))))
    ranks = np.array([observed.rank(a) for a in record.selected])
    return float(spearman_topk_positions(ranks, len(observed)).mean())

"""
Observed Model Estimation Service
Empirical transition probabilities from trajectories, with missing cells filled
by clustering arms on their passive probabilities and pooling each cluster's data.
"""
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
from sklearn.cluster import kmeans_plusplus

from config import settings
from exceptions import InvalidArgumentError, UnresolvableCellError, ensure
from models.estimation_schemas import (
    ClusterAssignment,
    ObservedEstimate,
    PartialModel,
    TrajectoryLog,
    TransitionCounts,
)
from models.schemas import ACTIVE_CELLS, CELLS, PASSIVE_CELLS, TransitionModel, arm_sort_key, cell_name

logger = logging.getLogger(__name__)

FALLBACKS = ("error", "population")


def count_transitions(log: TrajectoryLog) -> TransitionCounts:
    """
    Exact cell counts of a trajectory

    Raises:
        InvalidArgumentError: naming the first row whose state, action or next state is not 0/1
    """
    table = [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]
    for row, (s, a, s_next) in enumerate(log.transitions):
        for name, value in (("state", s), ("action", a), ("next_state", s_next)):
            if value not in (0, 1):
                raise InvalidArgumentError(f"arm {log.arm_id}, row {row}: {name}={value} is not 0 or 1")
        table[s][a][s_next] += 1
    return TransitionCounts(arm_id=log.arm_id, table=table)


def _ratio(engaged: int, support: int, min_support: int, smoothing: float) -> Optional[float]:
    if support < min_support or support + 2 * smoothing <= 0:
        return None
    return (engaged + smoothing) / (support + 2 * smoothing)


def empirical_model(
    counts: TransitionCounts,
    min_support: Optional[int] = None,
    smoothing: Optional[float] = None,
    active_min_support: Optional[int] = None,
) -> PartialModel:
    """
    p(s,a) = count(s,a,1) / (count(s,a,0) + count(s,a,1)) where that denominator
    reaches the cell's threshold, else missing. Passive cells use min_support, active
    cells use active_min_support (min_support when not given). A positive smoothing
    adds a pseudo-count to both outcomes of every present cell.
    """
    min_support = settings.PASSIVE_MIN_SUPPORT if min_support is None else min_support
    active_min_support = min_support if active_min_support is None else active_min_support
    smoothing = settings.SMOOTHING if smoothing is None else smoothing
    ensure(min_support >= 1, f"min_support must be >= 1, got {min_support}")
    ensure(active_min_support >= 1, f"active_min_support must be >= 1, got {active_min_support}")
    ensure(smoothing >= 0, f"smoothing must be >= 0, got {smoothing}")
    p, support = {}, {}
    for s, a in CELLS:
        name = cell_name(s, a)
        support[name] = counts.support(s, a)
        threshold = active_min_support if a == 1 else min_support
        p[name] = _ratio(counts.count(s, a, 1), support[name], threshold, smoothing)
    return PartialModel(arm_id=counts.arm_id or "", p=p, support=support, counts=counts)


def _pooled_counts(labels: Dict[str, int], models: Sequence[PartialModel], k: int) -> List[TransitionCounts]:
    pooled = [TransitionCounts() for _ in range(k)]
    for m in models:
        cluster = labels[m.arm_id]
        pooled[cluster] = pooled[cluster] + m.counts
    return pooled


def _active_probabilities(pooled: Sequence[TransitionCounts], min_support: int) -> List[Dict[str, Optional[float]]]:
    return [
        {cell_name(s, a): _ratio(c.count(s, a, 1), c.support(s, a), min_support, 0.0) for s, a in ACTIVE_CELLS}
        for c in pooled
    ]


def cluster_passive(
    models: Sequence[PartialModel],
    num_clusters: Optional[int] = None,
    seed: int = 0,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    active_min_support: Optional[int] = None,
) -> ClusterAssignment:
    """
    K-means (Lloyd, squared Euclidean) on the passive points (p00, p10)

    Initialization is k-means++ seeded with `seed`, drawn from the distinct points.
    Iterates until the largest centroid movement drops below tol or max_iters is reached.
    When there are fewer distinct points than clusters the cluster count is reduced
    to the number of distinct points.

    Raises:
        InvalidArgumentError: when a model lacks a passive cell (lists the arm ids)
    """
    num_clusters = settings.NUM_CLUSTERS if num_clusters is None else num_clusters
    max_iters = settings.KMEANS_MAX_ITERS if max_iters is None else max_iters
    tol = settings.KMEANS_TOL if tol is None else tol
    active_min_support = settings.ACTIVE_MIN_SUPPORT if active_min_support is None else active_min_support
    ensure(num_clusters >= 1, f"num_clusters must be >= 1, got {num_clusters}")
    ensure(max_iters >= 1, f"max_iters must be >= 1, got {max_iters}")
    ensure(len(models) > 0, "at least one model is required")
    incomplete = [m.arm_id for m in models if not m.has_passive()]
    if incomplete:
        raise InvalidArgumentError(f"models missing passive cells: {sorted(incomplete, key=arm_sort_key)[:20]}")

    points = np.array([[m.get(0, 0), m.get(1, 0)] for m in models], dtype=float)
    distinct = np.unique(points, axis=0)
    k = num_clusters
    if len(distinct) < k:
        logger.warning(f"Only {len(distinct)} distinct passive points; reducing clusters from {k} to {len(distinct)}")
        k = len(distinct)

    # sklearn seeds are 32-bit; fold the full seed through a SeedSequence
    init_state = int(np.random.SeedSequence(seed).generate_state(1)[0])
    centers, _ = kmeans_plusplus(distinct, n_clusters=k, random_state=init_state)
    rows = np.arange(len(points))
    history = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        history.append(float(d2[rows, labels].sum()))
        updated = centers.copy()
        for j in range(k):
            members = points[labels == j]
            if len(members):
                updated[j] = members.mean(axis=0)
        shift = float(np.linalg.norm(updated - centers, axis=1).max())
        centers = updated
        logger.debug(f"k-means iteration {iterations}: inertia={history[-1]:.6g} shift={shift:.3g}")
        if shift < tol:
            break

    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    history.append(float(d2[rows, labels].sum()))

    label_map = {m.arm_id: int(labels[i]) for i, m in enumerate(models)}
    pooled = _pooled_counts(label_map, models, k)
    logger.info(f"Clustered {len(models)} arms into {k} clusters in {iterations} iterations")
    return ClusterAssignment(
        labels=label_map,
        centroids=[(float(c[0]), float(c[1])) for c in centers],
        pooled=pooled,
        active_probabilities=_active_probabilities(pooled, active_min_support),
        requested_clusters=num_clusters,
        num_clusters=k,
        iterations=iterations,
        inertia_history=history,
        seed=seed,
    )


def attach_to_clusters(
    assignment: ClusterAssignment,
    models: Sequence[PartialModel],
    active_min_support: Optional[int] = None,
) -> ClusterAssignment:
    """
    Assign arms with incomplete passive data to existing clusters

    An arm with one passive cell goes to the centroid nearest on that coordinate;
    an arm with none goes to the largest cluster. Pooled counts include the new members.
    """
    active_min_support = settings.ACTIVE_MIN_SUPPORT if active_min_support is None else active_min_support
    centroids = np.array(assignment.centroids, dtype=float)
    sizes = np.bincount(list(assignment.labels.values()), minlength=assignment.num_clusters)
    largest = int(np.argmax(sizes))
    labels = dict(assignment.labels)
    for m in models:
        if m.arm_id in labels:
            continue
        present = [i for i, (s, a) in enumerate(PASSIVE_CELLS) if m.is_present(s, a)]
        if not present:
            labels[m.arm_id] = largest
            continue
        point = np.array([m.get(*PASSIVE_CELLS[i]) for i in present])
        d2 = ((centroids[:, present] - point[None, :]) ** 2).sum(axis=1)
        labels[m.arm_id] = int(d2.argmin())

    pooled = list(assignment.pooled)
    for m in models:
        if m.arm_id not in assignment.labels:
            pooled[labels[m.arm_id]] = pooled[labels[m.arm_id]] + m.counts
    return assignment.model_copy(update={
        "labels": labels,
        "pooled": pooled,
        "active_probabilities": _active_probabilities(pooled, active_min_support),
    })


def _fill_cells(
    assignment: ClusterAssignment,
    model: PartialModel,
    cells: Sequence[Tuple[int, int]],
    min_support: int,
    fallback: str,
    population: TransitionCounts,
) -> Dict[str, Optional[float]]:
    if model.arm_id not in assignment.labels:
        raise InvalidArgumentError(f"arm {model.arm_id} has no cluster assignment")
    cluster = assignment.labels[model.arm_id]
    pool = assignment.pooled[cluster]
    values = dict(model.p)
    for s, a in cells:
        if model.is_present(s, a):
            continue
        support = pool.support(s, a)
        if support >= min_support:
            values[cell_name(s, a)] = pool.count(s, a, 1) / support
        elif fallback == "population" and population.support(s, a) >= max(min_support, 1):
            logger.warning(f"Cluster {cluster} lacks data for p{s}{a}; using the population estimate")
            values[cell_name(s, a)] = population.count(s, a, 1) / population.support(s, a)
        else:
            raise UnresolvableCellError(cluster, (s, a), support, min_support)
    return values


def _population(assignment: ClusterAssignment) -> TransitionCounts:
    total = TransitionCounts()
    for c in assignment.pooled:
        total = total + c
    return total


def impute_passive(
    assignment: ClusterAssignment,
    models: Sequence[PartialModel],
    min_support: Optional[int] = None,
    fallback: str = "error",
) -> List[PartialModel]:
    """Fill missing passive cells from the arm's cluster pool; other cells untouched"""
    min_support = settings.PASSIVE_MIN_SUPPORT if min_support is None else min_support
    ensure(fallback in FALLBACKS, f"fallback must be one of {FALLBACKS}")
    population = _population(assignment)
    return [
        m.model_copy(update={"p": _fill_cells(assignment, m, PASSIVE_CELLS, min_support, fallback, population)})
        for m in models
    ]


def impute_active(
    assignment: ClusterAssignment,
    models: Sequence[PartialModel],
    min_support: Optional[int] = None,
    fallback: str = "error",
) -> List[TransitionModel]:
    """
    Complete models by replacing missing active cells with the pooled estimate of the arm's cluster

    Present cells are never altered.

    Raises:
        UnresolvableCellError: when a needed cluster cell has pooled support below min_support
            (unless fallback="population" and the whole population has enough data)
    """
    min_support = settings.ACTIVE_MIN_SUPPORT if min_support is None else min_support
    ensure(min_support >= 1, f"min_support must be >= 1, got {min_support}")
    ensure(fallback in FALLBACKS, f"fallback must be one of {FALLBACKS}")
    missing_passive = [m.arm_id for m in models if not m.has_passive()]
    if missing_passive:
        raise InvalidArgumentError(f"models missing passive cells: {missing_passive[:20]}")
    population = _population(assignment)
    return [
        TransitionModel(**_fill_cells(assignment, m, ACTIVE_CELLS, min_support, fallback, population))
        for m in models
    ]


def estimate_observed_models(
    logs: Iterable[TrajectoryLog],
    num_clusters: Optional[int] = None,
    seed: int = 0,
    passive_min_support: Optional[int] = None,
    active_min_support: Optional[int] = None,
    smoothing: Optional[float] = None,
    fallback: str = "error",
    max_iters: Optional[int] = None,
) -> ObservedEstimate:
    """
    Full estimation pipeline: counts -> empirical models -> clustering on passive
    probabilities -> passive and active imputation from cluster pools

    Returns:
        ObservedEstimate with complete models, per-cell imputation flags and the assignment
    """
    passive_min_support = settings.PASSIVE_MIN_SUPPORT if passive_min_support is None else passive_min_support
    active_min_support = settings.ACTIVE_MIN_SUPPORT if active_min_support is None else active_min_support

    partials = []
    for log in logs:
        if not log.is_chained():
            logger.warning(f"Trajectory of arm {log.arm_id} does not chain between contiguous weeks")
        partials.append(
            empirical_model(count_transitions(log), passive_min_support, smoothing, active_min_support)
        )
    ensure(len(partials) > 0, "no trajectories to estimate from")

    complete = [m for m in partials if m.has_passive()]
    if not complete:
        raise InvalidArgumentError("no arm has both passive cells observed; cannot cluster")
    assignment = cluster_passive(complete, num_clusters, seed, max_iters=max_iters, active_min_support=active_min_support)
    incomplete = [m for m in partials if not m.has_passive()]
    if incomplete:
        logger.warning(f"{len(incomplete)} arms lack passive data; attaching them to the nearest cluster")
        assignment = attach_to_clusters(assignment, incomplete, active_min_support)

    filled = impute_passive(assignment, partials, passive_min_support, fallback)
    completed = impute_active(assignment, filled, active_min_support, fallback)
    return ObservedEstimate(
        models={m.arm_id: model for m, model in zip(partials, completed)},
        imputed={m.arm_id: {cell_name(s, a): not m.is_present(s, a) for s, a in CELLS} for m in partials},
        assignment=assignment,
        partials={m.arm_id: m for m in partials},
    )

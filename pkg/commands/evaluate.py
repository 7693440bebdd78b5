"""
evaluate: predicted models + observed trajectories -> decision-focused error reports
"""
from typing import List
import logging
import os

from config import settings
from models.run_schemas import EvaluateRunConfig
from services.evaluation import WEEKLY_COLUMNS, evaluate_study, weekly_rows
from storage import (
    ensure_output_dir,
    read_models_csv,
    read_trajectory_csv,
    write_csv,
    write_json,
    write_manifest,
    write_observed_models_csv,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="Evaluate predicted models on observed trajectories")
    parser.add_argument("--predicted", required=True, help="CSV arm_id,p00,p10,p01,p11")
    parser.add_argument("--trajectories", required=True, help="CSV arm_id,week,state,action,next_state")
    parser.add_argument("--k", type=int, default=settings.TOP_K)
    parser.add_argument("--seed", type=int, required=True, help="seed of the clustering step")
    parser.add_argument("--beta", type=float, default=settings.DISCOUNT)
    parser.add_argument("--num-clusters", type=int, default=settings.NUM_CLUSTERS)
    parser.add_argument("--passive-min-support", type=int, default=settings.PASSIVE_MIN_SUPPORT)
    parser.add_argument("--active-min-support", type=int, default=settings.ACTIVE_MIN_SUPPORT)
    parser.add_argument("--smoothing", type=float, default=settings.SMOOTHING)
    parser.add_argument("--imputation-fallback", choices=("error", "population"), default="error")
    parser.add_argument("--weeks-window", type=int, default=None, help="evaluate only the first N weeks")
    parser.add_argument("--bins", type=int, default=settings.HISTOGRAM_BINS)
    parser.add_argument("--epsilon", type=float, default=settings.NORM_EPSILON)
    parser.add_argument("--label", default=None, help="run label used by compare")
    parser.add_argument("--output-dir", default="out")
    parser.set_defaults(handler=handle)


def handle(args) -> List[str]:
    config = EvaluateRunConfig(
        output_dir=args.output_dir,
        predicted=args.predicted,
        trajectories=args.trajectories,
        k=args.k,
        seed=args.seed,
        beta=args.beta,
        num_clusters=args.num_clusters,
        passive_min_support=args.passive_min_support,
        active_min_support=args.active_min_support,
        smoothing=args.smoothing,
        fallback=args.imputation_fallback,
        weeks_window=args.weeks_window,
        bins=args.bins,
        epsilon=args.epsilon,
        label=args.label,
    )
    return run(config)


def run(config: EvaluateRunConfig) -> List[str]:
    predicted = read_models_csv(config.predicted)
    logs = read_trajectory_csv(config.trajectories)
    out = ensure_output_dir(config.output_dir)

    report, estimate = evaluate_study(
        predicted,
        logs,
        k=config.k,
        beta=config.beta,
        num_clusters=config.num_clusters,
        seed=config.seed,
        passive_min_support=config.passive_min_support,
        active_min_support=config.active_min_support,
        smoothing=config.smoothing,
        fallback=config.fallback,
        weeks_window=config.weeks_window,
        bins=config.bins,
        epsilon=config.epsilon,
    )
    report.metadata["config"] = config.model_dump(mode="json")
    report.metadata["label"] = config.label or os.path.basename(os.path.normpath(config.output_dir))
    report.metadata["rng_algorithm"] = settings.RNG_ALGORITHM

    files = [
        write_json(os.path.join(out, "evaluation_report.json"), report.model_dump(mode="json")),
        write_json(
            os.path.join(out, "histograms.json"),
            {
                "weeks": {str(w.week): w.spearman_histogram.histogram.model_dump() for w in report.weeks},
                "cumulative": {name: r.histogram.model_dump() for name, r in report.cumulative.items()},
                "prediction_errors": {name: r.histogram.model_dump() for name, r in report.prediction_errors.items()},
            },
        ),
        write_csv(os.path.join(out, "weekly_errors.csv"), WEEKLY_COLUMNS, weekly_rows(report)),
        write_observed_models_csv(os.path.join(out, "observed_models.csv"), estimate),
    ]
    write_manifest(out, "evaluate", config.model_dump(mode="json"), files)
    return files

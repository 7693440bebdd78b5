"""
simulate: draw a cohort and run one study group per policy on it
"""
from typing import List
import logging
import os

from config import settings
from models.run_schemas import SimulateRunConfig
from models.study_schemas import POLICIES, CohortSpec, StudyConfig
from services.simulator import (
    cumulative_drops_prevented,
    default_cohort_spec,
    engagement_drops_prevented,
    generate_cohort,
    run_groups,
)
from storage import ensure_output_dir, read_json, write_json, write_manifest, write_models_csv, write_study_log

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Simulate intervention studies on a synthetic cohort")
    parser.add_argument("--n", type=int, required=True, help="cohort size")
    parser.add_argument("--k", type=int, required=True, help="weekly intervention budget")
    parser.add_argument("--weeks", type=int, required=True)
    parser.add_argument("--policy", nargs="+", choices=POLICIES, required=True,
                        help="one or more policies, each run as its own group on the same cohort")
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--cohort-seed", type=int, default=None, help="defaults to --seed")
    parser.add_argument("--beta", type=float, default=settings.DISCOUNT)
    parser.add_argument("--prediction-noise", type=float, default=0.0)
    parser.add_argument("--spread", type=float, default=0.05)
    parser.add_argument("--initial-engaging", type=float, default=0.5)
    parser.add_argument("--cohort-spec", default=None, help="JSON file with a cohort specification")
    parser.add_argument("--with-replacement", action="store_true",
                        help="random policy draws with replacement (duplicates collapse)")
    parser.add_argument("--output-dir", default="out")
    parser.set_defaults(handler=handle)


def handle(args) -> List[str]:
    config = SimulateRunConfig(
        output_dir=args.output_dir,
        n=args.n,
        k=args.k,
        weeks=args.weeks,
        policies=args.policy,
        seed=args.seed,
        cohort_seed=args.cohort_seed,
        beta=args.beta,
        prediction_noise=args.prediction_noise,
        spread=args.spread,
        initial_engaging_fraction=args.initial_engaging,
        cohort_spec=args.cohort_spec,
        with_replacement=args.with_replacement,
    )
    return run(config)


def _cohort_spec(config: SimulateRunConfig) -> CohortSpec:
    if config.cohort_spec is None:
        return default_cohort_spec(
            config.n,
            prediction_noise=config.prediction_noise,
            spread=config.spread,
            initial_engaging_fraction=config.initial_engaging_fraction,
        )
    spec = CohortSpec.model_validate(read_json(config.cohort_spec))
    return spec.model_copy(update={"n": config.n})


def run(config: SimulateRunConfig) -> List[str]:
    """Write one trajectory CSV + sidecar per policy, the cohort's models and a manifest"""
    out = ensure_output_dir(config.output_dir)
    arms = generate_cohort(_cohort_spec(config), config.seed if config.cohort_seed is None else config.cohort_seed)
    study_configs = [
        StudyConfig(
            weeks=config.weeks,
            budget_k=config.k,
            policy=policy,
            beta=config.beta,
            seed=config.seed,
            with_replacement=config.with_replacement,
        )
        for policy in config.policies
    ]
    logs = run_groups(arms, study_configs)

    files: List[str] = []
    for log in logs.values():
        files.extend(write_study_log(out, log))
    files.append(write_models_csv(os.path.join(out, "predicted_models.csv"), {a.arm_id: a.predicted_model for a in arms}))
    files.append(write_models_csv(os.path.join(out, "true_models.csv"), {a.arm_id: a.true_model for a in arms}))

    if "csoc" in logs and len(logs) > 1:
        control = logs["csoc"]
        summary = {}
        for policy, log in logs.items():
            if policy == "csoc":
                continue
            calls = log.total_service_calls
            summary[policy] = {
                "drops_prevented": engagement_drops_prevented(log, control),
                "drops_prevented_per_call": engagement_drops_prevented(log, control, normalize=True) if calls else None,
                "cumulative_drops_prevented": cumulative_drops_prevented(log, control),
                "service_calls": calls,
            }
        files.append(write_json(os.path.join(out, "engagement_summary.json"), summary))

    write_manifest(out, "simulate", config.model_dump(mode="json"), files)
    logger.info(f"simulate wrote {len(files)} files to {out}")
    return files

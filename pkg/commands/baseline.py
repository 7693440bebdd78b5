"""
baseline: expected top-k Spearman error of the purely random policy and sigma multiples
"""
from typing import List
import logging
import os

from config import settings
from exceptions import ensure
from models.run_schemas import BaselineReport, BaselineRunConfig
from services.baseline import baseline_stats, monte_carlo_random_error, sigma_multiples_from
from storage import ensure_output_dir, write_json, write_manifest

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("baseline", help="Random-policy baseline for the top-k Spearman error")
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--k", type=int, required=True)
    parser.add_argument("--observed", type=float, nargs="*", default=[],
                        help="observed E^s values to express as sigma multiples; the closed form at n=3000, k=200 "
                             "is 0.468, so pass --expected to compare against a published E[E^s] "
                             "(0.436 against --expected 0.495 gives c=2.892)")
    parser.add_argument("--expected", type=float, default=None,
                        help="use this E[E^s] instead of the closed form (e.g. a study's reported value)")
    parser.add_argument("--monte-carlo", type=int, default=None, metavar="TRIALS")
    parser.add_argument("--seed", type=int, default=None, help="required with --monte-carlo")
    parser.add_argument("--output-dir", default="out")
    parser.set_defaults(handler=handle)


def handle(args) -> List[str]:
    config = BaselineRunConfig(
        output_dir=args.output_dir,
        n=args.n,
        k=args.k,
        observed=args.observed,
        expected=args.expected,
        monte_carlo=args.monte_carlo,
        seed=args.seed,
    )
    return run(config)


def build_report(config: BaselineRunConfig) -> BaselineReport:
    stats = baseline_stats(config.n, config.k)
    if not stats.bound_valid:
        logger.warning(f"sigma bound is proven only for k <= 200 and n >= 3000; got n={config.n} k={config.k}")
    expected = stats.expected_error if config.expected is None else config.expected
    ensure(0.0 <= expected <= 1.0, f"expected error must lie in [0, 1], got {expected}")
    monte_carlo = None
    if config.monte_carlo is not None:
        monte_carlo = monte_carlo_random_error(config.n, config.k, config.monte_carlo, config.seed)
    return BaselineReport(
        metadata={
            "tool": settings.APP_NAME,
            "version": settings.APP_VERSION,
            "config": config.model_dump(mode="json"),
            "rng_algorithm": settings.RNG_ALGORITHM,
        },
        stats=stats,
        expected_used=expected,
        monte_carlo=monte_carlo,
        sigma_multiples={repr(o): sigma_multiples_from(o, expected, stats.std_bound) for o in config.observed},
    )


def run(config: BaselineRunConfig) -> List[str]:
    out = ensure_output_dir(config.output_dir)
    report = build_report(config)
    files = [write_json(os.path.join(out, "baseline_report.json"), report.model_dump(mode="json"))]
    write_manifest(out, "baseline", config.model_dump(mode="json"), files)
    for observed, c in report.sigma_multiples.items():
        logger.info(f"observed {observed}: c = {c:.3f}")
    return files

"""
compare: cross-study table of weekly top-k Spearman errors and the random-baseline comparison
"""
from typing import Dict, List
import logging
import os

from models.run_schemas import CompareRunConfig, EvaluationReport
from services.baseline import baseline_stats, sigma_multiples_from
from storage import ensure_output_dir, read_json, write_csv, write_json, write_manifest

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="Compare several evaluation reports")
    parser.add_argument("--reports", nargs="+", required=True, help="evaluation_report.json files")
    parser.add_argument("--labels", nargs="+", default=None, help="one label per report")
    parser.add_argument("--output-dir", default="out")
    parser.set_defaults(handler=handle)


def handle(args) -> List[str]:
    return run(CompareRunConfig(output_dir=args.output_dir, reports=args.reports, labels=args.labels))


def _label(report: EvaluationReport, path: str, position: int) -> str:
    return report.metadata.get("label") or f"{os.path.basename(path)}#{position + 1}"


def comparison_rows(reports: List[EvaluationReport]) -> List[list]:
    """Rows are weeks then 'cumulative'; columns are runs (mean top-k Spearman error)"""
    per_run: List[Dict[int, float]] = [{w.week: w.spearman for w in r.weeks} for r in reports]
    weeks = sorted({week for run in per_run for week in run})
    rows = [[week] + [run.get(week, "") for run in per_run] for week in weeks]
    rows.append(["cumulative"] + [r.cumulative["spearman"].mean for r in reports])
    return rows


def baseline_comparison(labels: List[str], reports: List[EvaluationReport]) -> Dict[str, dict]:
    """E[E^s] of the random policy, its sigma bound and c for each run"""
    table = {}
    for label, report in zip(labels, reports):
        n = report.metadata["n_arms"]
        k = min(report.metadata["k"], n)
        stats = baseline_stats(n, k)
        observed = report.cumulative["spearman"].mean
        table[label] = {
            "n": n,
            "k": k,
            "observed_error": observed,
            "expected_random_error": stats.expected_error,
            "std_bound": stats.std_bound,
            "bound_valid": stats.bound_valid,
            "sigma_multiples": sigma_multiples_from(observed, stats.expected_error, stats.std_bound),
        }
    return table


def run(config: CompareRunConfig) -> List[str]:
    reports = [EvaluationReport.model_validate(read_json(path)) for path in config.reports]
    labels = config.labels or [_label(r, p, i) for i, (r, p) in enumerate(zip(reports, config.reports))]
    if len(set(labels)) != len(labels):
        labels = [f"{label}#{i + 1}" for i, label in enumerate(labels)]
    out = ensure_output_dir(config.output_dir)

    files = [
        write_csv(os.path.join(out, "comparison.csv"), ["week"] + labels, comparison_rows(reports)),
        write_json(os.path.join(out, "baseline_comparison.json"), baseline_comparison(labels, reports)),
    ]
    write_manifest(out, "compare", config.model_dump(mode="json"), files)
    logger.info(f"Compared {len(reports)} runs")
    return files

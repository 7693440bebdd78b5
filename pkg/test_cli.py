"""
Integration Tests for the Command Line
Tests simulate, evaluate, baseline and compare end to end through main()
"""
import csv
import json
import os

import pytest

from commands.compare import comparison_rows
from config import settings
from main import EXIT_ERROR, EXIT_OK, main
from models.run_schemas import EvaluationReport, WeekEvaluation
from models.schemas import MetricReport
from storage import read_trajectory_csv


def _read(path):
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _simulate(out, *extra):
    argv = ["simulate", "--n", "120", "--k", "30", "--weeks", "6", "--seed", "7", "--output-dir", str(out)]
    return main(argv + list(extra))


@pytest.fixture(name="simulated")
def simulated_fixture(tmp_path):
    out = tmp_path / "sim"
    assert _simulate(out, "--policy", "round_robin", "csoc", "whittle") == EXIT_OK
    return out


def test_simulate_writes_files(simulated):
    names = set(os.listdir(simulated))
    for policy in ("round_robin", "csoc", "whittle"):
        assert f"study_{policy}.csv" in names
        assert f"study_{policy}.json" in names
    assert {"predicted_models.csv", "true_models.csv", "engagement_summary.json", "manifest.json"} <= names

    sidecar = json.loads(_read(simulated / "study_whittle.json"))
    assert sidecar["seed"] == 7
    assert sidecar["rng_algorithm"] == "PCG64"
    assert sidecar["config"]["policy"] == "whittle"
    summary = json.loads(_read(simulated / "engagement_summary.json"))
    assert set(summary) == {"round_robin", "whittle"}
    assert summary["whittle"]["service_calls"] == 6 * 30


def test_simulate_is_byte_identical(tmp_path, simulated):
    again = tmp_path / "again"
    assert _simulate(again, "--policy", "round_robin", "csoc", "whittle") == EXIT_OK
    for name in os.listdir(simulated):
        if name == "manifest.json":
            continue
        assert _read(simulated / name) == _read(again / name), name


def test_csoc_output_has_no_actions(simulated):
    with open(simulated / "study_csoc.csv", encoding="utf-8", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 6 * 120
    assert all(row["action"] == "0" for row in rows)


def test_trajectory_csv_layout(simulated):
    text = _read(simulated / "study_round_robin.csv")
    assert text.startswith("arm_id,week,state,action,next_state\n")
    assert "\r" not in text
    logs = read_trajectory_csv(str(simulated / "study_round_robin.csv"))
    assert len(logs) == 120
    assert all(log.weeks == [1, 2, 3, 4, 5, 6] for log in logs)


def test_simulate_creates_missing_output_dir(tmp_path):
    out = tmp_path / "a" / "b" / "c"
    assert _simulate(out, "--policy", "csoc") == EXIT_OK
    assert (out / "study_csoc.csv").exists()


def test_simulate_unusable_output_dir(tmp_path, capsys):
    blocker = tmp_path / "file.txt"
    blocker.write_text("not a directory")
    assert _simulate(blocker / "out", "--policy", "csoc") == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_simulate_requires_seed(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--n", "10", "--k", "2", "--weeks", "1", "--policy", "random",
              "--output-dir", str(tmp_path)])
    assert info.value.code == 2


def test_simulate_rejects_invalid_config(tmp_path, capsys):
    code = main(["simulate", "--n", "10", "--k", "2", "--weeks", "1", "--policy", "random", "--seed", "1",
                 "--beta", "1.0", "--output-dir", str(tmp_path)])
    assert code == EXIT_ERROR
    assert "beta" in capsys.readouterr().err


def test_simulate_with_cohort_spec(tmp_path):
    spec = {
        "n": 1,
        "clusters": [{"weight": 1.0, "passive_center": [0.2, 0.6], "active_center": [0.7, 0.9], "spread": 0.0}],
    }
    spec_path = tmp_path / "cohort.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "out"
    assert _simulate(out, "--policy", "random", "--cohort-spec", str(spec_path)) == EXIT_OK
    text = _read(out / "true_models.csv").splitlines()
    assert len(text) == 121
    assert text[1] == "0,0.2,0.6,0.7,0.9"


def test_evaluate_round_trip(tmp_path, simulated):
    out = tmp_path / "eval"
    code = main([
        "evaluate",
        "--predicted", str(simulated / "predicted_models.csv"),
        "--trajectories", str(simulated / "study_round_robin.csv"),
        "--seed", "0",
        "--num-clusters", "2",
        "--output-dir", str(out),
    ])
    assert code == EXIT_OK
    report = json.loads(_read(out / "evaluation_report.json"))
    assert report["metadata"]["k"] == 200
    assert report["metadata"]["config"]["seed"] == 0
    assert len(report["weeks"]) == 6
    assert set(report["cumulative"]) == {"spearman", "abs_error", "norm_error", "kendall"}
    assert set(report["prediction_errors"]) == {"rmse", "mae"}
    weekly = _read(out / "weekly_errors.csv").splitlines()
    assert weekly[0] == "week,n,k,abs_error,norm_error,kendall,spearman,spearman_median"
    assert weekly[-1].startswith("cumulative,")
    observed = _read(out / "observed_models.csv").splitlines()
    assert observed[0].endswith("imputed_p00,imputed_p10,imputed_p01,imputed_p11,cluster")
    assert len(observed) == 121

    # observed models fed back as predictions give zero error everywhere
    again = tmp_path / "self"
    code = main([
        "evaluate",
        "--predicted", str(out / "observed_models.csv"),
        "--trajectories", str(simulated / "study_round_robin.csv"),
        "--seed", "0",
        "--num-clusters", "2",
        "--output-dir", str(again),
    ])
    assert code == EXIT_OK
    report = json.loads(_read(again / "evaluation_report.json"))
    assert all(w["spearman"] == 0.0 and w["abs_error"] == 0.0 for w in report["weeks"])


def test_evaluate_bad_header(tmp_path, simulated, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("arm_id,wk,state,action,next_state\n0,1,0,0,0\n", encoding="utf-8")
    code = main(["evaluate", "--predicted", str(simulated / "predicted_models.csv"), "--trajectories", str(bad),
                 "--seed", "0", "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_ERROR
    err = capsys.readouterr().err
    assert "'week'" in err and "row 1" in err


def test_evaluate_bad_value_names_row(tmp_path, simulated, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("arm_id,week,state,action,next_state\n0,1,0,0,1\n0,2,1,3,0\n", encoding="utf-8")
    code = main(["evaluate", "--predicted", str(simulated / "predicted_models.csv"), "--trajectories", str(bad),
                 "--seed", "0", "--output-dir", str(tmp_path / "out")])
    assert code == EXIT_ERROR
    err = capsys.readouterr().err
    assert "'action'" in err and "row 3" in err


def test_baseline_closed_form(tmp_path):
    out = tmp_path / "base"
    assert main(["baseline", "--n", "100", "--k", "1", "--output-dir", str(out)]) == EXIT_OK
    report = json.loads(_read(out / "baseline_report.json"))
    assert report["stats"]["expected_error"] == pytest.approx(0.495)
    assert report["stats"]["bound_valid"] is False
    assert report["monte_carlo"] is None


def test_baseline_sigma_multiples(tmp_path):
    out = tmp_path / "base"
    code = main(["baseline", "--n", "3000", "--k", "200", "--observed", "0.436", "--expected", "0.495",
                 "--output-dir", str(out)])
    assert code == EXIT_OK
    report = json.loads(_read(out / "baseline_report.json"))
    assert report["stats"]["std_bound"] == pytest.approx(0.0204, abs=1e-4)
    assert report["sigma_multiples"]["0.436"] == pytest.approx(2.892, abs=0.01)


def test_baseline_monte_carlo(tmp_path):
    out = tmp_path / "base"
    code = main(["baseline", "--n", "3000", "--k", "200", "--monte-carlo", "4000", "--seed", "1",
                 "--output-dir", str(out)])
    assert code == EXIT_OK
    report = json.loads(_read(out / "baseline_report.json"))
    mc = report["monte_carlo"]
    assert abs(mc["mean"] - report["stats"]["expected_error"]) <= 4 * mc["std"] / 4000 ** 0.5


@pytest.mark.parametrize("argv", [
    ["--n", "10", "--k", "11"],
    ["--n", "10", "--k", "0"],
    ["--n", "3000", "--k", "200", "--monte-carlo", "10"],
])
def test_baseline_invalid(tmp_path, capsys, argv):
    assert main(["baseline", *argv, "--output-dir", str(tmp_path)]) == EXIT_ERROR
    assert capsys.readouterr().err.startswith("error:")


def test_compare(tmp_path, simulated):
    reports = []
    for policy in ("round_robin", "whittle"):
        out = tmp_path / f"eval_{policy}"
        assert main([
            "evaluate",
            "--predicted", str(simulated / "predicted_models.csv"),
            "--trajectories", str(simulated / f"study_{policy}.csv"),
            "--seed", "0",
            "--num-clusters", "2",
            "--k", "20",
            "--label", policy,
            "--output-dir", str(out),
        ]) == EXIT_OK
        reports.append(str(out / "evaluation_report.json"))

    out = tmp_path / "cmp"
    assert main(["compare", "--reports", *reports, "--output-dir", str(out)]) == EXIT_OK
    table = _read(out / "comparison.csv").splitlines()
    assert table[0] == "week,round_robin,whittle"
    assert [row.split(",")[0] for row in table[1:]] == ["1", "2", "3", "4", "5", "6", "cumulative"]
    baseline = json.loads(_read(out / "baseline_comparison.json"))
    assert set(baseline) == {"round_robin", "whittle"}
    assert baseline["whittle"]["k"] == 20


def test_compare_label_count_mismatch(tmp_path, capsys):
    code = main(["compare", "--reports", "a.json", "b.json", "--labels", "x", "--output-dir", str(tmp_path)])
    assert code == EXIT_ERROR


def _snapshot(directory):
    return {name: _read(directory / name) for name in sorted(os.listdir(directory)) if name != "manifest.json"}


def test_evaluate_rerun_is_byte_identical(tmp_path, simulated):
    out = tmp_path / "eval"
    argv = [
        "evaluate",
        "--predicted", str(simulated / "predicted_models.csv"),
        "--trajectories", str(simulated / "study_round_robin.csv"),
        "--seed", "3",
        "--num-clusters", "2",
        "--output-dir", str(out),
    ]
    assert main(argv) == EXIT_OK
    first = _snapshot(out)
    assert main(argv) == EXIT_OK
    assert _snapshot(out) == first
    assert set(first) == {"evaluation_report.json", "histograms.json", "weekly_errors.csv", "observed_models.csv"}


def test_baseline_monte_carlo_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "mc"
    argv = ["baseline", "--n", "500", "--k", "20", "--monte-carlo", "3000", "--seed", "4",
            "--observed", "0.4", "--output-dir", str(out)]
    assert main(argv) == EXIT_OK
    first = _snapshot(out)
    assert main(argv) == EXIT_OK
    assert _snapshot(out) == first


def test_readme_pipeline(tmp_path, monkeypatch):
    """The Running section of the README, command by command"""
    monkeypatch.chdir(tmp_path)
    assert main(["simulate", "--n", "1000", "--k", "50", "--weeks", "8", "--policy", "round_robin", "whittle", "csoc",
                 "--seed", "7", "--output-dir", "out/sim"]) == EXIT_OK
    assert main(["evaluate", "--predicted", "out/sim/predicted_models.csv",
                 "--trajectories", "out/sim/study_round_robin.csv", "--seed", "0", "--num-clusters", "2",
                 "--output-dir", "out/eval"]) == EXIT_OK
    # many clusters need the population pool for clusters without active data
    assert main(["evaluate", "--predicted", "out/sim/predicted_models.csv",
                 "--trajectories", "out/sim/study_whittle.csv", "--seed", "0", "--num-clusters", "20",
                 "--imputation-fallback", "population", "--output-dir", "out/eval2"]) == EXIT_OK
    assert main(["baseline", "--n", "3000", "--k", "200", "--observed", "0.436", "--expected", "0.495",
                 "--output-dir", "out/base"]) == EXIT_OK
    assert main(["baseline", "--n", "3000", "--k", "200", "--monte-carlo", "100000", "--seed", "1",
                 "--output-dir", "out/mc"]) == EXIT_OK
    assert main(["compare", "--reports", "out/eval/evaluation_report.json", "out/eval2/evaluation_report.json",
                 "--output-dir", "out/cmp"]) == EXIT_OK
    table = _read(tmp_path / "out" / "cmp" / "comparison.csv").splitlines()
    assert table[0] == "week,eval,eval2"
    assert len(table) == 1 + 8 + 1


def test_observed_alone_uses_closed_form(tmp_path):
    out = tmp_path / "base"
    assert main(["baseline", "--n", "3000", "--k", "200", "--observed", "0.436", "--output-dir", str(out)]) == EXIT_OK
    report = json.loads(_read(out / "baseline_report.json"))
    assert report["expected_used"] == pytest.approx(0.468148, abs=1e-6)
    assert report["sigma_multiples"]["0.436"] == pytest.approx(1.575, abs=0.01)


def test_simulate_discount_defaults_to_settings(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "DISCOUNT", 0.3)
    out = tmp_path / "sim"
    assert main(["simulate", "--n", "20", "--k", "3", "--weeks", "2", "--policy", "whittle", "--seed", "1",
                 "--output-dir", str(out)]) == EXIT_OK
    assert json.loads(_read(out / "study_whittle.json"))["config"]["beta"] == 0.3
    assert json.loads(_read(out / "manifest.json"))["config"]["beta"] == 0.3


def _compare_input(spearman_by_week, cumulative):
    weeks = [WeekEvaluation.model_construct(week=week, spearman=value) for week, value in spearman_by_week.items()]
    return EvaluationReport.model_construct(
        metadata={},
        weeks=weeks,
        cumulative={"spearman": MetricReport.model_construct(mean=cumulative)},
        prediction_errors={},
    )


def test_comparison_rows_align_weeks():
    rows = comparison_rows([_compare_input({1: 0.2, 2: 0.3}, 0.25), _compare_input({2: 0.1}, 0.1)])
    assert rows == [[1, 0.2, ""], [2, 0.3, 0.1], ["cumulative", 0.25, 0.1]]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])

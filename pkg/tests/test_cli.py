import json
import subprocess
import sys

import pytest

from cemcache.cli import main, parse_int_list
from cemcache.store import read_error_matrix, read_report_csv, read_schedule


@pytest.fixture(scope="module")
def small_matrix(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "prior.cem"
    assert main(["model", "--samples", "6", "--steps", "12", "--dim", "16", "--out", str(path)]) == 0
    return path


def test_model_writes_matrix(small_matrix, capsys):
    matrix = read_error_matrix(small_matrix)
    assert matrix.total_steps == 12 and matrix.intervals == tuple(range(1, 10))
    assert matrix.num_samples == 6


def test_model_reports_payload(tmp_path, capsys):
    out = tmp_path / "m.cem"
    assert main(["model", "--samples", "2", "--intervals", "1,3", "--out", str(out)]) == 0
    err = capsys.readouterr().err
    assert "payload 0.20 KB" in err  # 50 x 2 cells at 2 bytes
    assert read_error_matrix(out).intervals == (1, 3)


def test_plan_with_oracle(small_matrix, tmp_path, capsys):
    out = tmp_path / "plan.json"
    assert main(["plan", "--matrix", str(small_matrix), "--budget", "5", "--oracle", "--out", str(out)]) == 0
    assert "oracle agreement" in capsys.readouterr().err
    schedule = read_schedule(out)
    assert schedule.num_caching == 5 and sum(schedule.intervals) == 11


def test_plan_to_stdout_and_speedup(small_matrix, capsys):
    assert main(["plan", "--matrix", str(small_matrix), "--speedup", "2"]) == 0
    captured = capsys.readouterr()
    doc = json.loads(captured.out)
    assert doc["num_caching"] == 5  # round(12 / 2) - 1
    assert "N_c = 5" in captured.err


def test_plan_weights_and_candidates(small_matrix, capsys):
    weights = ",".join(["1"] * 8 + ["3"])
    assert main(["plan", "--matrix", str(small_matrix), "--budget", "4", "--weights", weights, "--candidates", "1..4"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["weights"][-1] == 3.0
    assert doc["candidates"] == [1, 2, 3, 4]
    assert set(doc["intervals"]) <= {1, 2, 3, 4}


def test_plan_infeasible_exit_code(small_matrix, capsys):
    assert main(["plan", "--matrix", str(small_matrix), "--budget", "12"]) == 1
    assert "no schedule exists" in capsys.readouterr().err
    assert main(["plan", "--matrix", str(small_matrix), "--budget", "2", "--weights", "1,2"]) == 1


def test_plan_missing_or_corrupt_matrix(tmp_path, capsys):
    assert main(["plan", "--matrix", str(tmp_path / "none.cem"), "--budget", "2"]) == 2
    bad = tmp_path / "bad.cem"
    bad.write_text("#cem-error-matrix v1\nT=2 intervals=1 samples=1\n2,NA,NA\n1,x,0\n")
    assert main(["plan", "--matrix", str(bad), "--budget", "1"]) == 2
    assert "line 4: non-numeric" in capsys.readouterr().err


def test_eval_with_baselines(small_matrix, tmp_path, capsys):
    plan = tmp_path / "plan.json"
    main(["plan", "--matrix", str(small_matrix), "--budget", "5", "--out", str(plan)])
    report = tmp_path / "eval.csv"
    argv = ["eval", "--schedule", str(plan), "--dim", "16", "--baseline", "uniform:2", "--baseline", "linear:1,3"]
    assert main(argv + ["--out", str(report)]) == 0
    header, rows, trailer = read_report_csv(report)
    assert header[0] == "schedule_id" and len(header) == 6
    assert [r[0] for r in rows] == [0, 1, 2]
    assert rows[1][1] == 6  # uniform:2 on 12 steps is 5 x 2 + 1
    assert trailer == []
    assert main(argv + ["--mode", "predict1", "--out", str(report)]) == 0


def test_eval_rejects_step_mismatch_and_bad_baseline(small_matrix, tmp_path, capsys):
    plan = tmp_path / "plan.json"
    main(["plan", "--matrix", str(small_matrix), "--budget", "5", "--out", str(plan)])
    assert main(["eval", "--schedule", str(plan), "--dim", "16", "--steps", "50"]) == 1
    assert main(["eval", "--schedule", str(plan), "--dim", "16", "--baseline", "cosine:3"]) == 1
    assert main(["eval", "--schedule", str(plan), "--dim", "16", "--baseline", "uniform:12"]) == 1


def test_sweep_writes_spearman_trailer(small_matrix, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--matrix", str(small_matrix), "--dim", "16", "--budget", "5", "--count", "20", "--out", str(out)]) == 0
    header, rows, trailer = read_report_csv(out)
    assert header == ["schedule_id", "total_cost", "terminal_cosine_distance"]
    assert len(rows) == 20
    assert len(trailer) == 1 and trailer[0].startswith("# spearman,")
    float(trailer[0].split(",")[1])


def test_sweep_bad_count(small_matrix):
    assert main(["sweep", "--matrix", str(small_matrix), "--dim", "16", "--budget", "5", "--count", "1"]) == 1


def test_bound(capsys):
    assert main(["bound", "--delta", "0.05", "--samples", "100"]) == 0
    assert capsys.readouterr().out.strip() == "0.13581"
    assert main(["bound", "--delta", "1.5", "--samples", "100"]) == 1


@pytest.mark.parametrize("argv", [[], ["plan", "--budget", "2"], ["model", "--samples", "x"], ["bound", "--delta", "0.1", "--samples", "2", "--seed", "-1"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_plan_budget_and_speedup_are_exclusive(small_matrix):
    with pytest.raises(SystemExit):
        main(["plan", "--matrix", str(small_matrix), "--budget", "2", "--speedup", "2"])


@pytest.mark.parametrize("text, expected", [("1..4", (1, 2, 3, 4)), ("1,3", (1, 3)), ("1..2,5", (1, 2, 5))])
def test_parse_int_list(text, expected):
    assert parse_int_list(text) == expected


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "cemcache", "bound", "--delta", "0.05", "--samples", "100"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "0.13581"


def test_model_default_size_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.cem", tmp_path / "b.cem"
    assert main(["model", "--samples", "100", "--steps", "50", "--intervals", "1..9", "--out", str(a)]) == 0
    assert "payload 0.88 KB" in capsys.readouterr().err
    assert main(["model", "--samples", "100", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert read_error_matrix(a).payload_bytes() < 1024


def test_model_single_sample_zero_variance(tmp_path):
    out = tmp_path / "one.cem"
    assert main(["model", "--samples", "1", "--steps", "10", "--out", str(out)]) == 0
    matrix = read_error_matrix(out)
    assert (matrix.variance[matrix.defined] == 0).all()


@pytest.fixture(scope="module")
def default_matrix(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli50") / "prior.cem"
    assert main(["model", "--samples", "20", "--out", str(path)]) == 0
    return path


def test_plan_half_budget(default_matrix, tmp_path):
    out = tmp_path / "plan.json"
    assert main(["plan", "--matrix", str(default_matrix), "--budget", "25", "--out", str(out)]) == 0
    schedule = read_schedule(out)
    assert schedule.num_caching == 25 and sum(schedule.intervals) == 49
    assert len(schedule.compute_steps) == 26


def test_plan_every_step(default_matrix, tmp_path):
    from cemcache import cumulative

    out = tmp_path / "plan.json"
    assert main(["plan", "--matrix", str(default_matrix), "--budget", "49", "--out", str(out)]) == 0
    schedule = read_schedule(out)
    assert schedule.intervals == (1,) * 49
    cum = cumulative(read_error_matrix(default_matrix))
    assert schedule.total_cost == pytest.approx(sum(cum.cell(t, 1) for t in range(1, 50)), rel=1e-12)


def test_plan_oracle_on_twenty_steps(tmp_path, capsys):
    matrix = tmp_path / "m20.cem"
    assert main(["model", "--samples", "5", "--steps", "20", "--dim", "16", "--out", str(matrix)]) == 0
    assert main(["plan", "--matrix", str(matrix), "--budget", "8", "--oracle"]) == 0
    assert "oracle agreement" in capsys.readouterr().err


def test_eval_all_ones_schedule_is_exact(tmp_path):
    from cemcache import CacheSchedule, write_schedule

    plan = tmp_path / "ones.json"
    write_schedule(CacheSchedule(50, (1,) * 49), plan)
    out = tmp_path / "eval.csv"
    assert main(["eval", "--schedule", str(plan), "--out", str(out)]) == 0
    _, rows, _ = read_report_csv(out)
    assert rows[0][2:] == [0.0, 0.0, 0.0, 0.0]


def test_sweep_on_constant_costs_reports_undefined(tmp_path, capsys):
    import numpy as np

    from cemcache import ErrorMatrix, write_error_matrix
    from cemcache.error_model import structural_absence

    absent = structural_absence(12, range(1, 10))
    zeros = np.where(absent, np.nan, 0.0)
    path = tmp_path / "zero.cem"
    write_error_matrix(ErrorMatrix(12, tuple(range(1, 10)), zeros, zeros, 1), path)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--matrix", str(path), "--dim", "16", "--budget", "5", "--count", "6", "--out", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    _, rows, trailer = read_report_csv(out)
    assert {r[1] for r in rows} == {0.0}
    assert trailer == ["# spearman,undefined"]


def test_sweep_output_is_byte_identical(small_matrix, tmp_path):
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert main(["sweep", "--matrix", str(small_matrix), "--dim", "16", "--budget", "4", "--count", "10", "--seed", "7", "--out", str(out)]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()

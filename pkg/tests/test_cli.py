import csv
import json

import pytest
from click.testing import CliRunner

from hetplan.cli import main
from hetplan.planner import SWEEP_COLUMNS


@pytest.fixture
def runner():
    return CliRunner()


def test_validate_ok(runner, tiny_path):
    result = runner.invoke(main, ["validate", tiny_path])
    assert result.exit_code == 0
    assert json.loads(result.output)["status"] == "ok"


def test_validate_bad_file(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "workflow": {}}))
    result = runner.invoke(main, ["validate", str(bad)])
    assert result.exit_code == 1


def test_validate_missing_file(runner):
    result = runner.invoke(main, ["validate", "/no/such/file.json"])
    assert result.exit_code == 2  # click usage error for a missing argument


class TestOptimize:
    def test_prints_cost(self, runner, tiny_path):
        result = runner.invoke(main, ["optimize", tiny_path])
        assert result.exit_code == 0
        assert "total    1 $/h" in result.output

    def test_infeasible_exit_2(self, runner, tiny_path):
        result = runner.invoke(main, ["optimize", tiny_path, "--accuracy", "1.01"])
        assert result.exit_code == 2
        assert "unreachable" in result.output

    def test_plan_file_deterministic(self, runner, small_path, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            result = runner.invoke(
                main, ["optimize", small_path, "--seed", "1", "-o", str(path)]
            )
            assert result.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_from_env(self, runner, tiny_path, tmp_path):
        out = tmp_path / "plan.json"
        result = runner.invoke(
            main, ["optimize", tiny_path, "-o", str(out)],
            env={"HETPLAN_SEED": "7"},
        )
        assert result.exit_code == 0
        assert json.loads(out.read_text())["meta"]["seed"] == 7


def test_baseline_strategies(runner, tiny_path):
    for strategy in ("bf", "ff"):
        result = runner.invoke(main, ["baseline", tiny_path, "--strategy", strategy])
        assert result.exit_code == 0
        assert "cost" in json.loads(result.output)


class TestLowerBound:
    def test_matches_optimizer_on_tiny(self, runner, tiny_path):
        result = runner.invoke(main, ["lower-bound", tiny_path])
        assert result.exit_code == 0
        assert json.loads(result.output)["cost"]["total"] == pytest.approx(1.0)

    def test_guard_exit_3(self, runner, tiny_path):
        result = runner.invoke(
            main, ["lower-bound", tiny_path, "--max-enumeration", "1"]
        )
        assert result.exit_code == 3
        assert "guard" in result.output


class TestSimulate:
    def test_reports_and_csv(self, runner, tiny_path, tmp_path):
        plan = tmp_path / "plan.json"
        assert runner.invoke(main, ["optimize", tiny_path, "-o", str(plan)]).exit_code == 0
        series = tmp_path / "series.csv"
        result = runner.invoke(main, [
            "simulate", tiny_path, "--plan", str(plan),
            "--duration", "30", "--csv", str(series),
        ])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["achieved_throughput"]["results"] == pytest.approx(10.0, rel=0.02)
        with open(series, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["second", "items_at_sink"]
        assert len(rows) == 32  # header + seconds 0..30

    def test_bad_plan_exit_1(self, runner, tiny_path, tmp_path):
        plan = tmp_path / "plan.json"
        plan.write_text(json.dumps({"surprise": True}))
        result = runner.invoke(main, ["simulate", tiny_path, "--plan", str(plan)])
        assert result.exit_code == 1


class TestSweep:
    def test_csv_columns(self, runner, tiny_path, tmp_path):
        out = tmp_path / "sweep.csv"
        result = runner.invoke(main, [
            "sweep", tiny_path, "--axis", "target_accuracy",
            "--values", "0.5,0.7", "--strategies", "jb,ff", "-o", str(out),
        ])
        assert result.exit_code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert tuple(rows[0].keys()) == SWEEP_COLUMNS

    def test_stdout_default(self, runner, tiny_path):
        result = runner.invoke(main, [
            "sweep", tiny_path, "--axis", "traffic_price_scale", "--values", "1.0",
        ])
        assert result.exit_code == 0
        assert result.output.splitlines()[0] == ",".join(SWEEP_COLUMNS)

    def test_tier_split_values_stay_strings(self, runner, small_path):
        result = runner.invoke(main, [
            "sweep", small_path, "--axis", "tier_split", "--values", "4:1,2:3",
        ])
        assert result.exit_code == 0
        assert "4:1" in result.output

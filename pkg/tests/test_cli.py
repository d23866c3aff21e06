"""CLI surface: simulate artifacts, replay/report output, serve config."""

import json

import pytest

from nudgeforge.cli import build_parser, main
from nudgeforge.sim import ScenarioConfig

SCENARIO = """\
n_pharmacies = 8
catalog_size = 20
days = 8
warmup_days = 7
base_order_rate = 1.2
basket_size_dist = 0.35,0.30,0.20,0.10,0.05
effect_delta = 0.2
fatigue_gamma = 0.95
open_prob = 0.8
offline_prob = 0.1
seed = 5
"""


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.kv"
    path.write_text(SCENARIO, encoding="utf-8")
    return path


class TestSimulate:
    def test_artifacts_written(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "out"
        code = main(
            ["simulate", "--scenario", str(scenario_file), "--out", str(out)]
        )
        assert code == 0
        assert (out / "platform" / "events" / "segments").exists()
        ticks = json.loads((out / "ticks.json").read_text())
        assert [t["day"] for t in ticks] == [7, 14]
        monitor = json.loads((out / "monitor.json").read_text())
        assert monitor["from_day"] == 7
        assert all("diff" in e for e in monitor["estimates"])
        truth = (out / "truth.csv").read_text().splitlines()
        assert truth[0].startswith("subject_id,day,")
        saved = ScenarioConfig.from_kv((out / "scenario.kv").read_text())
        assert saved.seed == 5
        assert "artifacts in" in capsys.readouterr().out

    def test_overrides_change_run(self, tmp_path, scenario_file):
        out = tmp_path / "out"
        main(
            [
                "simulate",
                "--scenario", str(scenario_file),
                "--seed", "9",
                "--days", "9",
                "--out", str(out),
            ]
        )
        saved = ScenarioConfig.from_kv((out / "scenario.kv").read_text())
        assert saved.seed == 9 and saved.days == 9

    def test_bad_scenario_reports_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.kv"
        bad.write_text("n_pharmacies = -3\n", encoding="utf-8")
        code = main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestReplayAndReport:
    def test_replay_summarizes(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "out"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(out)])
        capsys.readouterr()
        code = main(["replay", "--data-dir", str(out / "platform")])
        assert code == 0
        text = capsys.readouterr().out
        assert "devices: 8" in text
        assert "experiment: exp-pairs (running)" in text

    def test_report_prints_estimates(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "out"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(out)])
        capsys.readouterr()
        code = main(
            [
                "report",
                "--experiment", "exp-pairs",
                "--data-dir", str(out / "platform"),
            ]
        )
        assert code == 0
        text = capsys.readouterr().out
        assert "status: running" in text
        assert "tick day 7:" in text
        assert "day 7: diff=" in text

    def test_report_unknown_experiment_errors(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "out"
        main(["simulate", "--scenario", str(scenario_file), "--out", str(out)])
        code = main(
            ["report", "--experiment", "nope", "--data-dir", str(out / "platform")]
        )
        assert code == 1


class TestParser:
    def test_serve_requires_config_and_data_dir(self):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["serve"])
        args = parser.parse_args(["serve", "--config", "c.kv", "--data-dir", "d"])
        assert args.command == "serve"

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["destroy"])

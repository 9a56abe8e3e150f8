"""CLI contract: config loading, overrides, commands, exit codes, manifests."""

import pandas as pd
import pytest
from click.testing import CliRunner

from stoarb.cli import (
    ConfigError,
    config_from_dict,
    load_config,
    main,
)

FAST_YAML = """
seed: 3
data:
  source: synthetic
  length: 520
split:
  n_calibration: 336
forecaster:
  sigmas: [5.0]
  horizon: 6
policy:
  n_samples: 4
solver:
  grid_points: 15
  action_levels: 9
strategies: [point, conservative]
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(FAST_YAML)
    return path


class TestConfigLoading:
    def test_defaults_match_baseline_parameters(self):
        cfg = config_from_dict({})
        assert cfg.storage.p_max == 0.5
        assert cfg.storage.capacity == 1.0
        assert cfg.storage.eta == 0.9
        assert cfg.storage.discharge_cost == 10.0
        assert cfg.tracker.alpha == 0.05
        assert cfg.tracker.window == 168
        assert cfg.horizon == 6
        assert cfg.policy.n_samples == 100
        assert cfg.split.n_calibration == 336
        assert len(cfg.strategies) == 4

    def test_flag_overrides_beat_file_values(self, fast_config):
        cfg = load_config(fast_config, {"seed": 99, "n_samples": 2, "sigmas": (7.0,)})
        assert cfg.seed == 99
        assert cfg.policy.n_samples == 2
        assert cfg.sigmas == (7.0,)
        assert cfg.solver.grid_points == 15

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            config_from_dict({"bogus": 1})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ConfigError, match="tracker"):
            config_from_dict({"tracker": {"alhpa": 0.05}})

    def test_invalid_nested_value_rejected(self):
        with pytest.raises(ConfigError, match="alpha"):
            config_from_dict({"tracker": {"alpha": 1.5}})

    def test_unknown_strategy_rejected(self):
        with pytest.raises(ConfigError, match="strategy"):
            config_from_dict({"strategies": ["point", "bold"]})

    def test_empty_strategies_rejected(self):
        with pytest.raises(ConfigError, match="strategy"):
            config_from_dict({"strategies": []})

    def test_csv_source_requires_path(self):
        with pytest.raises(ConfigError, match="path"):
            config_from_dict({"data": {"source": "csv"}})

    def test_manifest_dict_unwraps_config(self):
        cfg = config_from_dict(
            {"artifact_version": "0.1.0", "command": "backtest",
             "config": {"seed": 17}}
        )
        assert cfg.seed == 17

    def test_policy_seed_derived_from_global_seed(self):
        cfg = config_from_dict({"seed": 10})
        assert cfg.policy.seed is None
        assert cfg.resolved_policy().seed == 12

    def test_explicit_policy_seed_wins(self):
        cfg = config_from_dict({"seed": 10, "policy": {"seed": 4}})
        assert cfg.resolved_policy().seed == 4

    def test_manifest_round_trips_through_loader(self, tmp_path):
        cfg = config_from_dict({"seed": 5, "policy": {"decision_tolerance": 1e-9}})
        manifest = tmp_path / "run_manifest.json"
        manifest.write_text(cfg.to_manifest("backtest"))
        reloaded = load_config(manifest, {})
        assert reloaded.policy.decision_tolerance == 1e-9
        assert reloaded.seed == 5
        assert reloaded.resolved_policy().seed == cfg.resolved_policy().seed


class TestGenerate:
    def test_writes_expected_row_count(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["generate", "--length", "8760", "--output-dir", str(out)]
        )
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(out / "prices.csv")
        assert len(frame) == 8760
        assert (out / "run_manifest.json").exists()

    def test_fixed_seed_twice_identical_files(self, runner, tmp_path):
        args = ["generate", "--length", "600", "--seed", "5"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(main, args + ["--output-dir", str(a)]).exit_code == 0
        assert runner.invoke(main, args + ["--output-dir", str(b)]).exit_code == 0
        assert (a / "prices.csv").read_bytes() == (b / "prices.csv").read_bytes()

    def test_zero_noise_profile_gives_constant_column(self, runner, tmp_path):
        cfg = tmp_path / "flat.yaml"
        cfg.write_text(
            "data:\n  source: synthetic\n  length: 200\n"
            "  profile: {daily_amplitude: 0.0, noise_sd: 0.0, spike_prob: 0.0}\n"
        )
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["generate", "--config", str(cfg), "--output-dir", str(out)]
        )
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(out / "prices.csv")
        assert frame["price"].nunique() == 1

    def test_csv_source_is_config_error(self, runner, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("data:\n  source: csv\n  path: somewhere.csv\n")
        result = runner.invoke(main, ["generate", "--config", str(cfg)])
        assert result.exit_code == 2

    def test_env_var_sets_default_output_root(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("STOARB_OUTPUT_ROOT", str(tmp_path / "root"))
        monkeypatch.chdir(tmp_path)
        result = runner.invoke(main, ["generate", "--length", "200"])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "root" / "generate" / "prices.csv").exists()


class TestConformalEval:
    def test_writes_interval_log_and_report(self, runner, fast_config, tmp_path):
        out = tmp_path / "ce"
        result = runner.invoke(
            main,
            ["conformal-eval", "--config", str(fast_config),
             "--output-dir", str(out), "--length", "1080"],
        )
        assert result.exit_code == 0, result.output
        intervals = pd.read_csv(out / "intervals.csv")
        assert set(intervals.columns) == {
            "sigma", "method", "origin_index", "offset", "point_forecast",
            "lower", "upper", "realized", "covered",
        }
        assert set(intervals["method"]) == {"pid"}
        report = pd.read_csv(out / "coverage_report.csv")
        assert list(report["offset"]) == [1, 2, 3, 4, 5, 6]
        coverage = intervals["covered"].mean()
        assert 0.93 <= coverage <= 0.97

    def test_aci_flag_adds_baseline_rows(self, runner, fast_config, tmp_path):
        out = tmp_path / "ce"
        result = runner.invoke(
            main,
            ["conformal-eval", "--config", str(fast_config),
             "--output-dir", str(out), "--aci"],
        )
        assert result.exit_code == 0, result.output
        intervals = pd.read_csv(out / "intervals.csv")
        assert set(intervals["method"]) == {"pid", "aci"}


class TestBacktestCommand:
    def test_summary_has_one_row_per_strategy_per_sigma(
        self, runner, fast_config, tmp_path
    ):
        out = tmp_path / "bt"
        result = runner.invoke(
            main,
            ["backtest", "--config", str(fast_config), "--output-dir", str(out),
             "--sigma", "5.0", "--sigma", "12.0"],
        )
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(out / "summary.csv")
        assert len(summary) == 4
        assert set(zip(summary["sigma"], summary["strategy"])) == {
            (5.0, "point"), (5.0, "conservative"),
            (12.0, "point"), (12.0, "conservative"),
        }
        for name in ("intervals.csv", "decisions.csv", "daily.csv",
                     "figure_cumulative_profit.csv", "run_manifest.json"):
            assert (out / name).exists()

    def test_rerun_from_manifest_is_bit_identical(self, runner, fast_config, tmp_path):
        first = tmp_path / "first"
        result = runner.invoke(
            main, ["backtest", "--config", str(fast_config), "--output-dir", str(first)]
        )
        assert result.exit_code == 0, result.output
        second = tmp_path / "second"
        result = runner.invoke(
            main,
            ["backtest", "--config", str(first / "run_manifest.json"),
             "--output-dir", str(second)],
        )
        assert result.exit_code == 0, result.output
        assert (first / "summary.csv").read_bytes() == (
            second / "summary.csv"
        ).read_bytes()

    def test_missing_price_file_names_path(self, runner, tmp_path):
        missing = tmp_path / "nope.csv"
        result = runner.invoke(main, ["backtest", "--csv", str(missing)])
        assert result.exit_code == 3
        assert str(missing) in result.output

    def test_config_error_exit_code(self, runner, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("tracker:\n  alpha: 2.0\n")
        result = runner.invoke(main, ["backtest", "--config", str(cfg)])
        assert result.exit_code == 2

    def test_missing_config_file_exit_code(self, runner, tmp_path):
        result = runner.invoke(
            main, ["backtest", "--config", str(tmp_path / "absent.yaml")]
        )
        assert result.exit_code == 2


class TestReportCommand:
    def test_renders_pngs_from_bundle(self, runner, fast_config, tmp_path):
        out = tmp_path / "bt"
        result = runner.invoke(
            main, ["backtest", "--config", str(fast_config), "--output-dir", str(out)]
        )
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ["report", str(out)])
        assert result.exit_code == 0, result.output
        for name in ("cumulative_profit.png", "cumulative_purchases.png",
                     "width_by_horizon.png", "coverage.png"):
            assert (out / name).exists(), name
        assert not list(out.glob(".tmp-*"))

    def test_missing_bundle_is_data_error(self, runner, tmp_path):
        result = runner.invoke(main, ["report", str(tmp_path / "absent")])
        assert result.exit_code == 3

    def test_csv_round_trip_through_backtest(self, runner, tmp_path):
        gen = tmp_path / "gen"
        result = runner.invoke(
            main, ["generate", "--length", "520", "--seed", "3",
                   "--output-dir", str(gen)]
        )
        assert result.exit_code == 0, result.output
        out = tmp_path / "bt"
        result = runner.invoke(
            main,
            ["backtest", "--csv", str(gen / "prices.csv"), "--output-dir", str(out),
             "--strategy", "point", "--n-samples", "4",
             "--grid-points", "15", "--action-levels", "9"],
        )
        assert result.exit_code == 0, result.output
        summary = pd.read_csv(out / "summary.csv")
        assert list(summary["strategy"]) == ["point"]

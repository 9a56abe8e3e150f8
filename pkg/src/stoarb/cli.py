"""Command-line entry point: generate data, evaluate intervals, backtest, report.

Configuration lives in one structured YAML file; command-line flags override
individual values. Every command writes a ``run_manifest.json`` capturing the
fully resolved configuration, the seeds, and the artifact version, and each
command also accepts a previous manifest in place of a config file, so any
run can be reproduced exactly from its own output directory.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import click
import pandas as pd
import yaml

from . import __version__
from .arbitrage import SolverConfig, StorageParams
from .backtest import (
    BacktestConfig,
    StrategyKind,
    atomic_write_frame,
    atomic_write_text,
    run_backtest,
    write_bundle,
)
from .conformal import (
    OnlineAciTracker,
    OnlineIntervalTracker,
    TrackerConfig,
    evaluate_stream,
)
from .market_data import (
    DatasetSplit,
    PriceDataError,
    PriceSeries,
    SyntheticForecasterConfig,
    SyntheticProfile,
    generate_synthetic_series,
    load_price_csv,
    write_price_csv,
)
from .policy import PolicyConfig

OUTPUT_ROOT_ENV = "STOARB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "stoarb_runs"
DEFAULT_ACI_GAMMA = 0.05

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class ConfigError(Exception):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(Exception):
    """Missing or malformed input data (exit code 3)."""


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    length: int = 8760
    profile: SyntheticProfile = field(default_factory=SyntheticProfile)

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ValueError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ValueError("data.source 'csv' requires data.path")
        if self.source == "synthetic" and self.length < 2:
            raise ValueError(f"data.length must be >= 2, got {self.length}")


@dataclass(frozen=True)
class SplitSpec:
    n_calibration: int = 336
    n_test: int | None = None

    def __post_init__(self):
        if self.n_calibration < 1:
            raise ValueError(f"split.n_calibration must be >= 1, got {self.n_calibration}")
        if self.n_test is not None and self.n_test < 1:
            raise ValueError(f"split.n_test must be >= 1, got {self.n_test}")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration; defaults follow the baseline setup:

    0.5 MWh per-interval power, 1 MWh capacity, one-way efficiency 0.9,
    discharge cost 10 $/MWh, alpha 0.05, horizon 6, 100 policy samples,
    336-step calibration split.
    """

    data: DataConfig = field(default_factory=DataConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    sigmas: tuple[float, ...] = (5.0,)
    horizon: int = 6
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    storage: StorageParams = field(default_factory=StorageParams)
    strategies: tuple[StrategyKind, ...] = (
        StrategyKind.PERFECT,
        StrategyKind.POINT,
        StrategyKind.CONSERVATIVE,
        StrategyKind.AGGRESSIVE,
    )
    output_dir: Path | None = None
    seed: int = 0
    aci_comparison: bool = False
    aci_gamma: float = DEFAULT_ACI_GAMMA

    def __post_init__(self):
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        if not self.sigmas:
            raise ValueError("at least one sigma is required")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0 < self.aci_gamma < 1:
            raise ValueError(f"aci_gamma must be in (0, 1), got {self.aci_gamma}")

    @property
    def series_seed(self) -> int:
        return self.seed

    @property
    def forecaster_seed(self) -> int:
        return self.seed + 1

    def resolved_policy(self) -> PolicyConfig:
        """Policy config with a concrete seed derived from the global seed."""
        if self.policy.seed is None:
            return dataclasses.replace(self.policy, seed=self.seed + 2)
        return self.policy

    def resolve_output_dir(self, command: str) -> Path:
        if self.output_dir is not None:
            return self.output_dir
        root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
        return Path(root) / command

    def to_manifest(self, command: str) -> str:
        payload = {
            "artifact_version": __version__,
            "command": command,
            "config": _config_to_dict(self),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _config_to_dict(cfg: RunConfig) -> dict:
    return {
        "data": {
            "source": cfg.data.source,
            "path": cfg.data.path,
            "length": cfg.data.length,
            "profile": dataclasses.asdict(cfg.data.profile),
        },
        "split": dataclasses.asdict(cfg.split),
        "forecaster": {"sigmas": list(cfg.sigmas), "horizon": cfg.horizon},
        "tracker": dataclasses.asdict(cfg.tracker),
        "policy": dataclasses.asdict(cfg.resolved_policy()),
        "solver": dataclasses.asdict(cfg.solver),
        "storage": dataclasses.asdict(cfg.storage),
        "strategies": [s.value for s in cfg.strategies],
        "output_dir": str(cfg.output_dir) if cfg.output_dir is not None else None,
        "seed": cfg.seed,
        "aci_comparison": cfg.aci_comparison,
        "aci_gamma": cfg.aci_gamma,
    }


def _build_section(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be a mapping, got {type(raw).__name__}")
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - valid
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid {section!r} config: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    """Build a RunConfig from a nested dict (parsed YAML or a manifest)."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    if "artifact_version" in raw and "config" in raw:
        raw = raw["config"]
        if not isinstance(raw, dict):
            raise ConfigError("manifest 'config' entry must be a mapping")
    raw = dict(raw)

    known = {
        "data",
        "split",
        "forecaster",
        "tracker",
        "policy",
        "solver",
        "storage",
        "strategies",
        "output_dir",
        "seed",
        "aci_comparison",
        "aci_gamma",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")

    data_raw = dict(raw.get("data", {}))
    profile_raw = data_raw.pop("profile", {})
    profile = _build_section(SyntheticProfile, profile_raw, "data.profile")
    data_raw["profile"] = profile
    data = _build_section(DataConfig, data_raw, "data")

    split = _build_section(SplitSpec, raw.get("split", {}), "split")

    fore_raw = raw.get("forecaster", {})
    if not isinstance(fore_raw, dict):
        raise ConfigError("section 'forecaster' must be a mapping")
    unknown = set(fore_raw) - {"sigmas", "horizon"}
    if unknown:
        raise ConfigError(f"unknown key(s) in 'forecaster': {sorted(unknown)}")
    sigmas = tuple(float(s) for s in fore_raw.get("sigmas", [5.0]))
    horizon = int(fore_raw.get("horizon", 6))

    tracker = _build_section(TrackerConfig, raw.get("tracker", {}), "tracker")
    policy_raw = dict(raw.get("policy", {}))
    policy_raw.setdefault("seed", None)
    policy = _build_section(PolicyConfig, policy_raw, "policy")
    solver = _build_section(SolverConfig, raw.get("solver", {}), "solver")
    storage = _build_section(StorageParams, raw.get("storage", {}), "storage")

    strategy_names = raw.get(
        "strategies", ["perfect", "point", "conservative", "aggressive"]
    )
    try:
        strategies = tuple(StrategyKind(name) for name in strategy_names)
    except ValueError as exc:
        raise ConfigError(
            f"unknown strategy in {strategy_names!r}; valid: "
            f"{[s.value for s in StrategyKind]}"
        ) from exc

    out = raw.get("output_dir")
    try:
        return RunConfig(
            data=data,
            split=split,
            sigmas=sigmas,
            horizon=horizon,
            tracker=tracker,
            policy=policy,
            solver=solver,
            storage=storage,
            strategies=strategies,
            output_dir=Path(out) if out else None,
            seed=int(raw.get("seed", 0)),
            aci_comparison=bool(raw.get("aci_comparison", False)),
            aci_gamma=float(raw.get("aci_gamma", DEFAULT_ACI_GAMMA)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, overrides: dict) -> RunConfig:
    """Load YAML (or a manifest JSON) and apply flag overrides on top."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        try:
            # manifests are JSON; parse as JSON first because YAML 1.1 reads
            # bare scientific notation like 1e-09 as a string
            loaded = json.loads(text)
        except json.JSONDecodeError:
            try:
                loaded = yaml.safe_load(text)
            except yaml.YAMLError as exc:
                raise ConfigError(f"could not parse config file {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        raw = loaded

    if "artifact_version" in raw and "config" in raw:
        inner = raw["config"]
        if not isinstance(inner, dict):
            raise ConfigError("manifest 'config' entry must be a mapping")
        raw = inner
    raw = _apply_overrides(raw, overrides)
    return config_from_dict(raw)


def _apply_overrides(raw: dict, overrides: dict) -> dict:
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}

    def section(name: str) -> dict:
        return raw.setdefault(name, {})

    if overrides.get("seed") is not None:
        raw["seed"] = overrides["seed"]
    if overrides.get("output_dir") is not None:
        raw["output_dir"] = overrides["output_dir"]
    if overrides.get("sigmas"):
        section("forecaster")["sigmas"] = list(overrides["sigmas"])
    if overrides.get("horizon") is not None:
        section("forecaster")["horizon"] = overrides["horizon"]
    if overrides.get("strategies"):
        raw["strategies"] = list(overrides["strategies"])
    if overrides.get("csv_path") is not None:
        sec = section("data")
        sec["source"] = "csv"
        sec["path"] = overrides["csv_path"]
    if overrides.get("length") is not None:
        section("data")["length"] = overrides["length"]
    if overrides.get("n_calibration") is not None:
        section("split")["n_calibration"] = overrides["n_calibration"]
    if overrides.get("n_test") is not None:
        section("split")["n_test"] = overrides["n_test"]
    if overrides.get("n_samples") is not None:
        section("policy")["n_samples"] = overrides["n_samples"]
    if overrides.get("alpha") is not None:
        section("tracker")["alpha"] = overrides["alpha"]
    if overrides.get("grid_points") is not None:
        section("solver")["grid_points"] = overrides["grid_points"]
    if overrides.get("action_levels") is not None:
        section("solver")["action_levels"] = overrides["action_levels"]
    if overrides.get("aci") is not None:
        raw["aci_comparison"] = overrides["aci"]
    return raw


def _load_series(cfg: RunConfig) -> PriceSeries:
    if cfg.data.source == "csv":
        path = Path(cfg.data.path)
        if not path.exists():
            raise DataError(f"price file not found: {path}")
        try:
            return load_price_csv(path)
        except PriceDataError as exc:
            raise DataError(f"could not load price file {path}: {exc}") from exc
    return generate_synthetic_series(
        cfg.data.length, seed=cfg.series_seed, profile=cfg.data.profile
    )


def _resolve_split(cfg: RunConfig, series: PriceSeries) -> DatasetSplit:
    n = len(series)
    n_cal = cfg.split.n_calibration
    n_test = cfg.split.n_test
    if n_test is None:
        n_test = n - n_cal - cfg.horizon
    if n_test < 1:
        raise DataError(
            f"series of length {n} leaves no test range after "
            f"{n_cal} calibration steps and horizon {cfg.horizon}"
        )
    try:
        split = DatasetSplit(n_calibration=n_cal, n_test=n_test)
        split.validate_for(series)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return split


def _forecaster(cfg: RunConfig, sigma: float) -> SyntheticForecasterConfig:
    return SyntheticForecasterConfig(
        sigma=sigma, horizon=cfg.horizon, seed=cfg.forecaster_seed
    )


def _prepare_output(cfg: RunConfig, command: str) -> Path:
    out_dir = cfg.resolve_output_dir(command)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def _config_options(fn):
    """Shared config-file and override flags for every command."""
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML config file or a run_manifest.json from a previous run."),
        click.option("--seed", type=int, default=None, help="Global seed override."),
        click.option("--output-dir", type=click.Path(), default=None,
                     help="Output directory override."),
        click.option("--sigma", "sigmas", type=float, multiple=True,
                     help="Forecaster sigma (repeatable; overrides the config list)."),
        click.option("--horizon", type=int, default=None, help="Look-ahead horizon override."),
        click.option("--strategy", "strategies", multiple=True,
                     type=click.Choice([s.value for s in StrategyKind]),
                     help="Strategy to run (repeatable; overrides the config list)."),
        click.option("--csv", "csv_path", type=click.Path(), default=None,
                     help="Load prices from this CSV instead of generating synthetic data."),
        click.option("--length", type=int, default=None, help="Synthetic series length override."),
        click.option("--n-calibration", type=int, default=None,
                     help="Calibration split length override."),
        click.option("--n-test", type=int, default=None, help="Test split length override."),
        click.option("--n-samples", type=int, default=None,
                     help="Monte-Carlo policy sample count override."),
        click.option("--alpha", type=float, default=None, help="Miscoverage level override."),
        click.option("--grid-points", type=int, default=None,
                     help="Solver state-grid resolution override."),
        click.option("--action-levels", type=int, default=None,
                     help="Solver action-grid resolution override."),
        click.option("--aci/--no-aci", "aci", default=None,
                     help="Include the ACI baseline in conformal evaluation."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _gather_config(config_path, **overrides) -> RunConfig:
    return load_config(config_path, overrides)


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except DataError as exc:
        _fail(str(exc), EXIT_DATA)
    except SystemExit:
        raise
    except Exception as exc:
        _fail(f"{type(exc).__name__}: {exc}", EXIT_RUNTIME)


@click.group()
@click.version_option(version=__version__, prog_name="stoarb")
def main():
    """Conformal prediction intervals driving risk-averse storage arbitrage."""


@main.command()
@_config_options
def generate(config_path, **overrides):
    """Generate a synthetic hourly price series and write it as CSV."""

    def run():
        cfg = _gather_config(config_path, **overrides)
        if cfg.data.source != "synthetic":
            raise ConfigError("generate requires data.source 'synthetic'")
        out_dir = _prepare_output(cfg, "generate")
        series = _load_series(cfg)
        out_path = out_dir / "prices.csv"
        tmp = out_path.with_name(f".tmp-{out_path.name}")
        write_price_csv(series, tmp)
        os.replace(tmp, out_path)
        atomic_write_text(out_dir / "run_manifest.json", cfg.to_manifest("generate"))
        prices = series.prices
        click.echo(f"wrote {len(series)} rows to {out_path}")
        click.echo(
            f"mean={prices.mean():.2f} sd={prices.std():.2f} "
            f"min={prices.min():.2f} max={prices.max():.2f}"
        )

    _guarded(run)


@main.command("conformal-eval")
@_config_options
def conformal_eval(config_path, **overrides):
    """Evaluate interval trackers over the test range; write interval logs."""

    def run():
        cfg = _gather_config(config_path, **overrides)
        out_dir = _prepare_output(cfg, "conformal-eval")
        series = _load_series(cfg)
        split = _resolve_split(cfg, series)

        from .market_data import synthetic_forecast

        interval_parts = []
        report_rows = []
        for sigma in cfg.sigmas:
            panel = synthetic_forecast(series, split, _forecaster(cfg, sigma))
            runs = {"pid": OnlineIntervalTracker(series, panel, split, cfg.tracker)}
            if cfg.aci_comparison:
                runs["aci"] = OnlineAciTracker(
                    series, panel, split,
                    alpha=cfg.tracker.alpha, gamma=cfg.aci_gamma,
                )
            for method, tracker in runs.items():
                result = evaluate_stream(series, panel, split, tracker)
                frame = pd.DataFrame(
                    {
                        "sigma": sigma,
                        "method": method,
                        "origin_index": result.origin,
                        "offset": result.offset,
                        "point_forecast": result.point_forecast,
                        "lower": result.lower,
                        "upper": result.upper,
                        "realized": result.realized,
                        "covered": result.covered.astype(int),
                    }
                )
                interval_parts.append(frame)
                cov = result.coverage_by_horizon()
                widths, n_inf = result.width_by_horizon()
                for h in range(cfg.horizon):
                    report_rows.append(
                        {
                            "sigma": sigma,
                            "method": method,
                            "offset": h + 1,
                            "coverage": cov[h],
                            "mean_finite_width": widths[h],
                            "n_infinite": int(n_inf[h]),
                        }
                    )
                click.echo(
                    f"sigma={sigma} method={method}: "
                    f"coverage={result.overall_coverage():.4f} "
                    f"infinite_intervals={result.n_infinite()}"
                )

        atomic_write_frame(
            pd.concat(interval_parts, ignore_index=True), out_dir / "intervals.csv"
        )
        atomic_write_frame(
            pd.DataFrame(report_rows), out_dir / "coverage_report.csv"
        )
        atomic_write_text(
            out_dir / "run_manifest.json", cfg.to_manifest("conformal-eval")
        )
        click.echo(f"wrote {out_dir / 'intervals.csv'} and {out_dir / 'coverage_report.csv'}")

    _guarded(run)


@main.command()
@_config_options
def backtest(config_path, **overrides):
    """Run the requested strategies over the test range; write the bundle."""

    def run():
        cfg = _gather_config(config_path, **overrides)
        out_dir = _prepare_output(cfg, "backtest")
        series = _load_series(cfg)
        split = _resolve_split(cfg, series)
        policy = cfg.resolved_policy()

        tagged = []
        for sigma in cfg.sigmas:
            forecaster = _forecaster(cfg, sigma)
            for strategy in cfg.strategies:
                bt_cfg = BacktestConfig(
                    strategy=strategy,
                    horizon=cfg.horizon,
                    tracker=cfg.tracker,
                    policy=policy,
                    solver=cfg.solver,
                    storage=cfg.storage,
                )
                result = run_backtest(series, split, forecaster, bt_cfg)
                tagged.append((sigma, result))
                click.echo(
                    f"sigma={sigma} strategy={strategy.value}: "
                    f"profit={result.total_profit:.2f} "
                    f"purchases={result.total_purchases:.2f} "
                    f"negative_days={result.negative_days}"
                )
        paths = write_bundle(tagged, out_dir, manifest_text=cfg.to_manifest("backtest"))
        summary = pd.read_csv(paths["summary.csv"])
        click.echo(summary.to_string(index=False))
        click.echo(f"bundle written to {out_dir}")

    _guarded(run)


@main.command()
@click.argument("bundle_dir", type=click.Path())
def report(bundle_dir):
    """Re-render the summary and figure images from an existing bundle."""

    def run():
        from .report import render_report

        bundle = Path(bundle_dir)
        summary_path = bundle / "summary.csv"
        if not summary_path.exists():
            raise DataError(f"no summary.csv in bundle directory: {bundle}")
        summary = pd.read_csv(summary_path)
        click.echo(summary.to_string(index=False))
        written = render_report(bundle)
        for path in written:
            click.echo(f"wrote {path}")

    _guarded(run)


if __name__ == "__main__":
    main()

"""Rolling-horizon backtest: forecast, build intervals, decide, execute.

Each test-range origin re-optimizes an H-step window and executes only the
first interval against the realized price (receding horizon). Discharge is
re-checked against the realized price at execution: a planned discharge at a
negative realized price is cancelled and counted, never silently executed.
State of charge and the per-offset conformal trackers carry forward through
the whole test range.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .arbitrage import SolverConfig, StorageParams, solve_batch
from .conformal import OnlineIntervalTracker, TrackerConfig, mean_width_by_horizon
from .market_data import DatasetSplit, PriceSeries, SyntheticForecasterConfig, synthetic_forecast
from .policy import CHARGE, DISCHARGE, IDLE, PolicyConfig, clamp_intervals, run_policy

HOURS_PER_DAY = 24


class StrategyKind(str, Enum):
    PERFECT = "perfect"
    POINT = "point"
    CONSERVATIVE = "conservative"
    AGGRESSIVE = "aggressive"

    @property
    def uses_intervals(self) -> bool:
        return self in (StrategyKind.CONSERVATIVE, StrategyKind.AGGRESSIVE)


@dataclass(frozen=True)
class BacktestConfig:
    strategy: StrategyKind
    horizon: int = 6
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    storage: StorageParams = field(default_factory=StorageParams)
    use_numba: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")


@dataclass
class BacktestResult:
    """Executed trajectory plus per-day and per-horizon aggregates.

    ``origins`` are the decision times; executed arrays are aligned with
    them. ``intervals`` is empty for strategies that never build intervals.
    """

    strategy: StrategyKind
    origins: np.ndarray
    p: np.ndarray
    b: np.ndarray
    e: np.ndarray
    realized: np.ndarray
    step_profit: np.ndarray
    step_purchases: np.ndarray
    daily: pd.DataFrame
    negative_days: int
    total_profit: float
    total_purchases: float
    decisions: pd.DataFrame
    intervals: pd.DataFrame
    n_negative_price_cancellations: int
    n_clamped_bounds: int

    def overall_coverage(self) -> float:
        if self.intervals.empty:
            return float("nan")
        return float(self.intervals["covered"].mean())

    def coverage_by_horizon(self) -> np.ndarray:
        if self.intervals.empty:
            return np.array([])
        grouped = self.intervals.groupby("offset")["covered"].mean()
        return grouped.sort_index().to_numpy()

    def width_by_horizon(self) -> tuple[np.ndarray, np.ndarray]:
        if self.intervals.empty:
            return np.array([]), np.array([], dtype=np.int64)
        horizon = int(self.intervals["offset"].max())
        n = len(self.intervals) // horizon
        lower = self.intervals["lower"].to_numpy().reshape(n, horizon)
        upper = self.intervals["upper"].to_numpy().reshape(n, horizon)
        return mean_width_by_horizon(lower, upper)

    def n_infinite_intervals(self) -> int:
        if self.intervals.empty:
            return 0
        widths = self.intervals["upper"].to_numpy() - self.intervals["lower"].to_numpy()
        return int(np.sum(~np.isfinite(widths)))


def _plan_to_decision_rows(p: np.ndarray, b: np.ndarray, tol: float):
    """Decision-log rows for a single deterministic plan (N=1 degeneracy)."""
    rows = []
    for t in range(p.size):
        if b[t] > tol:
            rows.append((CHARGE, float(b[t]), 1, 0))
        elif p[t] > tol:
            rows.append((DISCHARGE, float(p[t]), 0, 1))
        else:
            rows.append((IDLE, 0.0, 0, 0))
    return rows


def run_backtest(
    series: PriceSeries,
    split: DatasetSplit,
    forecaster: SyntheticForecasterConfig,
    cfg: BacktestConfig,
) -> BacktestResult:
    """Simulate one strategy over the test range with hourly re-optimization.

    Decision origins are the test indices whose full H-step window realizes
    inside the series. The policy RNG stream is keyed per (policy seed,
    origin, sample) so the run is reproducible regardless of evaluation
    order.
    """
    split.validate_for(series)
    if cfg.horizon != forecaster.horizon:
        raise ValueError(
            f"config horizon {cfg.horizon} != forecaster horizon {forecaster.horizon}"
        )
    prices = series.prices
    horizon = cfg.horizon
    origins = [t for t in split.test_range if t + horizon <= len(series) - 1]
    if not origins:
        raise ValueError("no usable decision origins: series too short for the horizon")

    needs_panel = cfg.strategy != StrategyKind.PERFECT
    panel = synthetic_forecast(series, split, forecaster) if needs_panel else None

    tracker = None
    clamp_scale = None
    if cfg.strategy.uses_intervals:
        tracker = OnlineIntervalTracker(series, panel, split, cfg.tracker)
        clamp_scale = tracker.calibration_abs_p99()

    n = len(origins)
    p_exec = np.zeros(n)
    b_exec = np.zeros(n)
    e_path = np.empty(n)
    realized = np.empty(n)
    step_profit = np.empty(n)
    step_purchases = np.empty(n)
    cancellations = 0
    clamped_total = 0

    dec_rows: list[tuple] = []
    int_rows: list[tuple] = []

    e_cur = float(cfg.storage.e0)
    tol = cfg.policy.decision_tolerance
    for i, t in enumerate(origins):
        params_t = replace(cfg.storage, e0=e_cur)
        truth_window = prices[t + 1 : t + 1 + horizon]

        if cfg.strategy == StrategyKind.PERFECT:
            p_plan, b_plan, _ = solve_batch(
                truth_window[None, :], params_t, cfg.solver, use_numba=cfg.use_numba
            )
            plan_rows = _plan_to_decision_rows(p_plan[0], b_plan[0], tol)
        elif cfg.strategy == StrategyKind.POINT:
            forecasts = panel.forecasts(t)
            p_plan, b_plan, _ = solve_batch(
                forecasts[None, :], params_t, cfg.solver, use_numba=cfg.use_numba
            )
            plan_rows = _plan_to_decision_rows(p_plan[0], b_plan[0], tol)
        else:
            tracker.advance_to(t)
            lower, upper = tracker.intervals_at(t)
            forecasts = panel.forecasts(t)
            for h in range(horizon):
                truth = prices[t + 1 + h]
                int_rows.append(
                    (
                        t,
                        h + 1,
                        float(forecasts[h]),
                        float(lower[h]),
                        float(upper[h]),
                        float(truth),
                        int(lower[h] <= truth <= upper[h]),
                    )
                )
            if np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)):
                lower_c, upper_c = lower, upper
            else:
                lower_c, upper_c, n_clamped = clamp_intervals(
                    lower, upper, forecasts, clamp_scale
                )
                clamped_total += n_clamped
            mode = (
                "conservative"
                if cfg.strategy == StrategyKind.CONSERVATIVE
                else "aggressive"
            )
            policy_cfg = replace(cfg.policy, mode=mode)
            result = run_policy(
                lower_c,
                upper_c,
                params_t,
                policy_cfg,
                cfg.solver,
                use_numba=cfg.use_numba,
                decision_key=t,
            )
            plan_rows = [
                (d.action, d.quantity, d.n_agree_charge, d.n_agree_discharge)
                for d in result.decisions
            ]

        for h, (action, qty, nc, nd) in enumerate(plan_rows):
            dec_rows.append((t, h + 1, action, qty, nc, nd))

        action, qty = plan_rows[0][0], plan_rows[0][1]
        lam = prices[t + 1]
        if action == DISCHARGE and lam < 0:
            cancellations += 1
            action, qty = IDLE, 0.0
        if action == CHARGE:
            b_exec[i] = qty
            e_cur = e_cur + qty * cfg.storage.eta
        elif action == DISCHARGE:
            p_exec[i] = qty
            e_cur = e_cur - qty / cfg.storage.eta
        # chained float updates can drift past the bounds by ~1e-15; snap back
        e_cur = min(max(e_cur, 0.0), cfg.storage.capacity)
        e_path[i] = e_cur
        realized[i] = lam
        step_profit[i] = lam * (p_exec[i] - b_exec[i]) - cfg.storage.discharge_cost * p_exec[i]
        step_purchases[i] = lam * b_exec[i]

    day_index = np.arange(n) // HOURS_PER_DAY
    daily = (
        pd.DataFrame(
            {"day": day_index, "profit": step_profit, "purchases": step_purchases}
        )
        .groupby("day", as_index=False)
        .sum()
    )
    total_profit = float(step_profit.sum())
    total_purchases = float(step_purchases.sum())
    negative_days = int((daily["profit"] < 0).sum())

    decisions = pd.DataFrame(
        dec_rows,
        columns=[
            "origin_index",
            "t_offset",
            "action",
            "quantity_mwh",
            "n_agree_charge",
            "n_agree_discharge",
        ],
    )
    intervals = pd.DataFrame(
        int_rows,
        columns=[
            "origin_index",
            "offset",
            "point_forecast",
            "lower",
            "upper",
            "realized",
            "covered",
        ],
    )

    return BacktestResult(
        strategy=cfg.strategy,
        origins=np.asarray(origins, dtype=np.int64),
        p=p_exec,
        b=b_exec,
        e=e_path,
        realized=realized,
        step_profit=step_profit,
        step_purchases=step_purchases,
        daily=daily,
        negative_days=negative_days,
        total_profit=total_profit,
        total_purchases=total_purchases,
        decisions=decisions,
        intervals=intervals,
        n_negative_price_cancellations=cancellations,
        n_clamped_bounds=clamped_total,
    )


def summarize(results: dict[StrategyKind, BacktestResult]) -> pd.DataFrame:
    """One row per strategy: negative days, totals, coverage and width stats."""
    if not results:
        raise ValueError("no results to summarize")
    reference = next(iter(results.values())).origins
    for res in results.values():
        if not np.array_equal(res.origins, reference):
            raise ValueError("results cover different test ranges")
    rows = []
    for strategy, res in results.items():
        widths, _ = res.width_by_horizon()
        rows.append(
            {
                "strategy": strategy.value,
                "negative_days": res.negative_days,
                "total_profit": res.total_profit,
                "total_purchases": res.total_purchases,
                "coverage": res.overall_coverage(),
                "mean_width_h1": widths[0] if widths.size else float("nan"),
                "mean_width_hmax": widths[-1] if widths.size else float("nan"),
                "n_infinite_intervals": res.n_infinite_intervals(),
                "negative_price_cancellations": res.n_negative_price_cancellations,
            }
        )
    return pd.DataFrame(rows)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    tmp = path.with_name(f".tmp-{path.name}")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_frame(frame: pd.DataFrame, path: str | Path) -> None:
    atomic_write_text(path, frame.to_csv(index=False))


def emit_figure_data(result: BacktestResult, out_dir: str | Path) -> list[Path]:
    """Write per-result figure CSVs; returns the written paths.

    Always: cumulative daily profit and cumulative daily purchases. For
    interval strategies additionally: per-offset width table and the running
    coverage series (whose final value equals the overall coverage).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    prof = result.daily[["day"]].copy()
    prof["cumulative_profit"] = result.daily["profit"].cumsum()
    path = out_dir / "figure_cumulative_profit.csv"
    atomic_write_frame(prof, path)
    written.append(path)

    purch = result.daily[["day"]].copy()
    purch["cumulative_purchases"] = result.daily["purchases"].cumsum()
    path = out_dir / "figure_cumulative_purchases.csv"
    atomic_write_frame(purch, path)
    written.append(path)

    if not result.intervals.empty:
        widths, n_inf = result.width_by_horizon()
        width_frame = pd.DataFrame(
            {
                "offset": np.arange(1, widths.size + 1),
                "mean_width": widths,
                "n_infinite": n_inf,
            }
        )
        path = out_dir / "figure_width_by_horizon.csv"
        atomic_write_frame(width_frame, path)
        written.append(path)

        covered = result.intervals["covered"].to_numpy()
        running = np.cumsum(covered) / np.arange(1, covered.size + 1)
        cov_frame = pd.DataFrame(
            {"interval_index": np.arange(covered.size), "running_coverage": running}
        )
        path = out_dir / "figure_coverage.csv"
        atomic_write_frame(cov_frame, path)
        written.append(path)
    return written


def write_bundle(
    tagged_results: list[tuple[float, BacktestResult]],
    out_dir: str | Path,
    manifest_text: str | None = None,
) -> dict[str, Path]:
    """Write the result bundle for a list of (sigma, result) runs.

    Single files with sigma and strategy key columns: summary.csv,
    intervals.csv, decisions.csv, daily.csv, figure_*.csv, plus the manifest
    if given. Returns a name -> path map.
    """
    if not tagged_results:
        raise ValueError("empty result list")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    def keyed(frame: pd.DataFrame, sigma: float, strategy: StrategyKind) -> pd.DataFrame:
        frame = frame.copy()
        frame.insert(0, "sigma", sigma)
        frame.insert(1, "strategy", strategy.value)
        return frame

    summary_rows = []
    intervals_parts, decisions_parts, daily_parts = [], [], []
    fig_profit, fig_purchases, fig_width, fig_cov = [], [], [], []
    for sigma, res in tagged_results:
        by_strategy = {res.strategy: res}
        row = summarize(by_strategy)
        row.insert(0, "sigma", sigma)
        summary_rows.append(row)
        decisions_parts.append(keyed(res.decisions, sigma, res.strategy))
        daily_parts.append(keyed(res.daily, sigma, res.strategy))
        if not res.intervals.empty:
            intervals_parts.append(keyed(res.intervals, sigma, res.strategy))

        prof = res.daily[["day"]].copy()
        prof["cumulative_profit"] = res.daily["profit"].cumsum()
        fig_profit.append(keyed(prof, sigma, res.strategy))
        purch = res.daily[["day"]].copy()
        purch["cumulative_purchases"] = res.daily["purchases"].cumsum()
        fig_purchases.append(keyed(purch, sigma, res.strategy))
        if not res.intervals.empty:
            widths, n_inf = res.width_by_horizon()
            fig_width.append(
                keyed(
                    pd.DataFrame(
                        {
                            "offset": np.arange(1, widths.size + 1),
                            "mean_width": widths,
                            "n_infinite": n_inf,
                        }
                    ),
                    sigma,
                    res.strategy,
                )
            )
            covered = res.intervals["covered"].to_numpy()
            running = np.cumsum(covered) / np.arange(1, covered.size + 1)
            fig_cov.append(
                keyed(
                    pd.DataFrame(
                        {
                            "interval_index": np.arange(covered.size),
                            "running_coverage": running,
                        }
                    ),
                    sigma,
                    res.strategy,
                )
            )

    def write(name: str, parts: list[pd.DataFrame]) -> None:
        if not parts:
            return
        path = out_dir / name
        atomic_write_frame(pd.concat(parts, ignore_index=True), path)
        paths[name] = path

    write("summary.csv", summary_rows)
    write("intervals.csv", intervals_parts)
    write("decisions.csv", decisions_parts)
    write("daily.csv", daily_parts)
    write("figure_cumulative_profit.csv", fig_profit)
    write("figure_cumulative_purchases.csv", fig_purchases)
    write("figure_width_by_horizon.csv", fig_width)
    write("figure_coverage.csv", fig_cov)

    if manifest_text is not None:
        path = out_dir / "run_manifest.json"
        atomic_write_text(path, manifest_text)
        paths["run_manifest.json"] = path
    return paths

"""Render figure images from a result bundle's delimited figure data.

Each ``figure_*.csv`` written by the backtest bundle has sigma and strategy
key columns; here every (sigma, strategy) pair becomes one line on the
corresponding chart. Missing figure files (for example a bundle that ran only
point-forecast strategies and logged no intervals) are skipped.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd


def _save_atomic(fig, path: Path) -> None:
    tmp = path.with_name(f".tmp-{path.name}")
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)


def _line_figure(
    frame: pd.DataFrame, x: str, y: str, title: str, ylabel: str
):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for (sigma, strategy), group in frame.groupby(["sigma", "strategy"]):
        ax.plot(group[x], group[y], label=f"sigma={sigma} {strategy}")
    ax.set_xlabel(x.replace("_", " "))
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    return fig


def _nominal_coverage(bundle: Path) -> float | None:
    manifest = bundle / "run_manifest.json"
    if not manifest.exists():
        return None
    try:
        payload = json.loads(manifest.read_text())
        alpha = payload["config"]["tracker"]["alpha"]
    except (json.JSONDecodeError, KeyError, TypeError):
        return None
    return 1.0 - float(alpha)


def render_report(bundle: str | Path) -> list[Path]:
    """Render PNG charts next to the bundle CSVs; returns the written paths."""
    bundle = Path(bundle)
    written: list[Path] = []

    charts = [
        (
            "figure_cumulative_profit.csv",
            "cumulative_profit.png",
            "day",
            "cumulative_profit",
            "Cumulative profit by day",
            "profit ($)",
        ),
        (
            "figure_cumulative_purchases.csv",
            "cumulative_purchases.png",
            "day",
            "cumulative_purchases",
            "Cumulative purchases by day",
            "purchases ($)",
        ),
        (
            "figure_width_by_horizon.csv",
            "width_by_horizon.png",
            "offset",
            "mean_width",
            "Mean interval width by look-ahead offset",
            "width ($/MWh)",
        ),
    ]
    for csv_name, png_name, x, y, title, ylabel in charts:
        csv_path = bundle / csv_name
        if not csv_path.exists():
            continue
        frame = pd.read_csv(csv_path)
        fig = _line_figure(frame, x, y, title, ylabel)
        out = bundle / png_name
        _save_atomic(fig, out)
        written.append(out)

    cov_path = bundle / "figure_coverage.csv"
    if cov_path.exists():
        frame = pd.read_csv(cov_path)
        fig = _line_figure(
            frame,
            "interval_index",
            "running_coverage",
            "Running empirical coverage",
            "coverage",
        )
        nominal = _nominal_coverage(bundle)
        if nominal is not None:
            fig.axes[0].axhline(
                nominal, linestyle="--", linewidth=1, color="black",
                label=f"nominal {nominal:.2f}",
            )
            fig.axes[0].legend(fontsize=8)
        out = bundle / "coverage.png"
        _save_atomic(fig, out)
        written.append(out)

    return written

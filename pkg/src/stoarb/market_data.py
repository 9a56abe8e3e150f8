"""Hourly price series: CSV ingestion, synthetic generation, and synthetic point forecasts.

Timestamps are parsed and validated for uniform spacing on load, then the rest
of the package works in integer interval indices. Gaps and duplicate stamps are
hard errors; silently filling them would corrupt downstream coverage statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

DEFAULT_TIMESTAMP_COLUMN = "timestamp"
DEFAULT_PRICE_COLUMN = "price"

# Epoch used for generated series; arbitrary but fixed for reproducibility.
SYNTHETIC_EPOCH = pd.Timestamp("2022-01-01 00:00")


class PriceDataError(ValueError):
    """Malformed or inconsistent price input."""


class NonUniformSpacingError(PriceDataError):
    """Timestamps are not on a uniform grid (gap, duplicate, or disorder)."""


@dataclass(frozen=True)
class PriceSeries:
    """Uniformly spaced price observations in $/MWh.

    Index i corresponds to ``start_time + i * step`` exactly. Negative prices
    are legal; NaN/inf are not.
    """

    start_time: pd.Timestamp
    step: pd.Timedelta
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.ndim != 1 or prices.size < 2:
            raise PriceDataError(f"need at least 2 prices, got shape {prices.shape}")
        if not np.all(np.isfinite(prices)):
            raise PriceDataError("prices contain NaN or infinite values")
        if self.step <= pd.Timedelta(0):
            raise PriceDataError(f"step must be positive, got {self.step}")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "start_time", pd.Timestamp(self.start_time))
        object.__setattr__(self, "step", pd.Timedelta(self.step))

    def __len__(self) -> int:
        return self.prices.size

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_time, periods=len(self), freq=self.step)


@dataclass(frozen=True)
class DatasetSplit:
    """Contiguous calibration/test split: calibration [0, T1), test [T1, T1+T2)."""

    n_calibration: int
    n_test: int

    def __post_init__(self):
        if self.n_calibration < 1 or self.n_test < 1:
            raise ValueError(
                f"both split lengths must be >= 1, got "
                f"({self.n_calibration}, {self.n_test})"
            )

    @property
    def calibration_range(self) -> range:
        return range(0, self.n_calibration)

    @property
    def test_range(self) -> range:
        return range(self.n_calibration, self.n_calibration + self.n_test)

    @property
    def test_end(self) -> int:
        return self.n_calibration + self.n_test

    def validate_for(self, series: PriceSeries) -> None:
        if self.test_end > len(series):
            raise ValueError(
                f"split needs {self.test_end} intervals but series has {len(series)}"
            )


@dataclass(frozen=True)
class SyntheticProfile:
    """Shape parameters for the synthetic hourly price generator."""

    base: float = 45.0
    daily_amplitude: float = 18.0
    ar_coeff: float = 0.7
    noise_sd: float = 9.0
    spike_prob: float = 0.01
    spike_magnitude: float = 120.0

    def __post_init__(self):
        if not 0.0 <= self.ar_coeff < 1.0:
            raise ValueError(f"ar_coeff must be in [0, 1), got {self.ar_coeff}")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise ValueError(f"spike_prob must be in [0, 1], got {self.spike_prob}")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


@dataclass(frozen=True)
class SyntheticForecasterConfig:
    """Synthetic point forecaster: truth plus Gaussian noise.

    ``sigma`` is the targeted one-step-ahead error ($/MWh). The noise standard
    deviation compounds with the look-ahead offset as sigma * sqrt(h), so
    longer horizons carry proportionally more forecast error. ``lookback`` is
    unused by the synthetic forecaster (it peeks at the truth) and is carried
    only for interface parity with a real point model.
    """

    sigma: float
    horizon: int = 6
    lookback: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.lookback < 1:
            raise ValueError(f"lookback must be >= 1, got {self.lookback}")


@dataclass(frozen=True)
class ForecastPanel:
    """Point forecasts per (origin, offset): values[i, h-1] predicts price at
    origin_start + i + h. Origins only exist where the full horizon fits inside
    the series."""

    origin_start: int
    values: np.ndarray  # shape (n_origins, horizon)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] < 1:
            raise ValueError(f"values must be 2-D (origins, horizon), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("forecast values contain NaN or infinite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def origins(self) -> range:
        return range(self.origin_start, self.origin_start + self.values.shape[0])

    def forecasts(self, origin: int) -> np.ndarray:
        """Length-H forecast vector for prices at origin+1 .. origin+H."""
        if origin not in self.origins:
            raise KeyError(f"origin {origin} outside panel range {self.origins}")
        return self.values[origin - self.origin_start]


def load_price_csv(
    path: str | Path,
    timestamp_column: str = DEFAULT_TIMESTAMP_COLUMN,
    price_column: str = DEFAULT_PRICE_COLUMN,
) -> PriceSeries:
    """Load a price series from CSV, validating uniform spacing.

    The file must have a header row with the named timestamp (ISO-8601) and
    price columns. Non-uniform spacing, duplicates, and unparseable values are
    errors, never silently repaired.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"price file not found: {path}")
    try:
        # round_trip parsing so that write_price_csv(load_price_csv(p)) is exact
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise PriceDataError(f"empty price file: {path}") from exc
    if frame.empty:
        raise PriceDataError(f"no data rows in {path}")
    for col in (timestamp_column, price_column):
        if col not in frame.columns:
            raise PriceDataError(f"missing column {col!r} in {path} (has {list(frame.columns)})")

    try:
        stamps = pd.to_datetime(frame[timestamp_column], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise PriceDataError(f"unparseable timestamps in {path}: {exc}") from exc
    prices = pd.to_numeric(frame[price_column], errors="coerce").to_numpy(dtype=np.float64)
    if np.isnan(prices).any():
        bad = int(np.flatnonzero(np.isnan(prices))[0])
        raise PriceDataError(
            f"non-numeric price at row {bad}: {frame[price_column].iloc[bad]!r}"
        )
    if len(frame) < 2:
        raise PriceDataError(f"need at least 2 rows, got {len(frame)}")

    diffs = stamps.diff().iloc[1:]
    step = diffs.iloc[0]
    if step <= pd.Timedelta(0):
        raise NonUniformSpacingError(f"timestamps not strictly increasing at row 1 in {path}")
    irregular = diffs[diffs != step]
    if not irregular.empty:
        row = int(irregular.index[0])
        raise NonUniformSpacingError(
            f"non-uniform spacing at row {row}: expected {step}, got {irregular.iloc[0]}"
        )
    return PriceSeries(start_time=stamps.iloc[0], step=step, prices=prices)


def write_price_csv(
    series: PriceSeries,
    path: str | Path,
    timestamp_column: str = DEFAULT_TIMESTAMP_COLUMN,
    price_column: str = DEFAULT_PRICE_COLUMN,
) -> None:
    """Write the mirror CSV format read by :func:`load_price_csv`.

    Prices are written at full repr precision so load(write(s)) round-trips
    exactly.
    """
    frame = pd.DataFrame(
        {
            timestamp_column: series.timestamps().strftime("%Y-%m-%dT%H:%M:%S"),
            price_column: [repr(float(p)) for p in series.prices],
        }
    )
    frame.to_csv(path, index=False)


def generate_synthetic_series(
    length: int,
    seed: int,
    profile: SyntheticProfile | None = None,
    start_time: pd.Timestamp = SYNTHETIC_EPOCH,
) -> PriceSeries:
    """Generate a desk-scale synthetic hourly price series.

    Components: a base level, a sinusoidal daily cycle peaking in the evening,
    an AR(1) noise process (``noise_sd`` is the innovation sd), and occasional
    positive spikes emulating real-time scarcity events. Deterministic per
    seed. The unconditional mean stays near ``base``.
    """
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    profile = profile or SyntheticProfile()
    rng = np.random.default_rng(seed)

    hours = np.arange(length)
    cycle = profile.daily_amplitude * np.sin(2.0 * np.pi * (hours % 24 - 12) / 24.0)

    noise = np.zeros(length)
    innovations = rng.normal(0.0, profile.noise_sd, size=length)
    for t in range(1, length):
        noise[t] = profile.ar_coeff * noise[t - 1] + innovations[t]

    spikes = profile.spike_magnitude * (rng.random(length) < profile.spike_prob)

    prices = profile.base + cycle + noise + spikes
    return PriceSeries(start_time=start_time, step=pd.Timedelta(hours=1), prices=prices)


def synthetic_forecast(
    series: PriceSeries,
    split: DatasetSplit,
    cfg: SyntheticForecasterConfig,
) -> ForecastPanel:
    """Build the synthetic forecast panel: truth plus horizon-scaled noise.

    For every origin t with t + H inside the series, the offset-h forecast is
    price[t+h] + beta with beta ~ Normal(0, (sigma * sqrt(h))^2), drawn
    independently per (origin, offset). sigma=0 reproduces the ground truth
    exactly at every offset.
    """
    split.validate_for(series)
    n = len(series)
    h = cfg.horizon
    n_origins = n - h
    if n_origins < 1:
        raise ValueError(f"horizon {h} leaves no valid forecast origins for length {n}")

    rng = np.random.default_rng(cfg.seed)
    offsets = np.arange(1, h + 1)
    targets = np.arange(n_origins)[:, None] + offsets[None, :]
    truth = series.prices[targets]
    if cfg.sigma == 0.0:
        values = truth
    else:
        scale = cfg.sigma * np.sqrt(offsets)[None, :]
        values = truth + rng.normal(0.0, 1.0, size=truth.shape) * scale
    return ForecastPanel(origin_start=0, values=values)

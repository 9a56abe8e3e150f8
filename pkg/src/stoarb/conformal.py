"""Online conformal uncertainty quantification for price forecasts.

Signed-residual scores are tracked per look-ahead offset by a pair of
integrator-controlled quantile trackers (upper tail at 1 - alpha/2, lower tail
at alpha/2). Each tracker combines a score forecast (a rolling empirical
quantile) with an integral of past coverage errors, which keeps long-run
per-side miscoverage at its target even under distribution shift. An adaptive
conformal inference (ACI) baseline is included for comparison; unlike the
integrator trackers it can emit infinite intervals after a miss streak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .market_data import DatasetSplit, ForecastPanel, PriceSeries

UPPER = "upper"
LOWER = "lower"

MIN_CALIBRATION_SCORES = 10

# Clamp for the tangent saturation argument, just inside +-pi/2.
_TAN_CLIP = math.pi / 2.0 - 1e-3


class TooFewScoresError(ValueError):
    """Calibration set smaller than the minimum required."""


@dataclass(frozen=True)
class TrackerConfig:
    """Configuration shared by all per-offset quantile trackers.

    ``integral_gain`` scales the coverage-error integral; the update applied to
    the quantile is gain * gain_scale * saturation(integral), where gain_scale
    is the 90th percentile of absolute calibration scores (so behaviour is
    invariant to the price level). Saturation is either the identity
    ("linear") or a time-damped tangent ("tangent") with threshold
    sat_c * t**sat_h_exponent.
    """

    alpha: float = 0.05
    integral_gain: float = 0.1
    saturation: str = "linear"
    sat_c: float = 10.0
    sat_h_exponent: float = 0.5
    scorecaster: str = "rolling_quantile"
    window: int = 168

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.integral_gain <= 0:
            raise ValueError(f"integral_gain must be > 0, got {self.integral_gain}")
        if self.saturation not in ("linear", "tangent"):
            raise ValueError(f"unknown saturation {self.saturation!r}")
        if self.scorecaster not in ("none", "rolling_quantile"):
            raise ValueError(f"unknown scorecaster {self.scorecaster!r}")
        if self.scorecaster == "rolling_quantile" and self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not 0.0 <= self.sat_h_exponent < 1.0:
            raise ValueError(f"sat_h_exponent must be in [0, 1), got {self.sat_h_exponent}")

    @property
    def side_alpha(self) -> float:
        return self.alpha / 2.0


@dataclass(frozen=True)
class QuantileTrackerState:
    """One side of a tracker pair: current quantile plus integrator state.

    ``q`` is the deployed quantile (score units, $/MWh); ``q_base`` is the
    scorecaster part it was built from. ``err_integral`` is the running sum of
    (miss indicator - side_alpha) and is exactly recomputable from the logged
    miss sequence. ``gain_scale`` converts the dimensionless integral into
    $/MWh and is frozen at calibration time.
    """

    side: str
    q: float
    q_base: float
    err_integral: float
    scores: tuple[float, ...]
    t: int
    gain_scale: float

    @property
    def direction(self) -> float:
        return 1.0 if self.side == UPPER else -1.0


@dataclass(frozen=True)
class PredictionInterval:
    """Two-sided price interval; infinite bounds are legal."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class AciState:
    """Adaptive conformal inference on absolute residuals (symmetric intervals)."""

    alpha_t: float
    alpha_target: float
    gamma: float
    calibration_scores: np.ndarray  # sorted ascending

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        scores = np.asarray(self.calibration_scores, dtype=np.float64)
        scores = np.sort(scores)
        scores.setflags(write=False)
        object.__setattr__(self, "calibration_scores", scores)


def signed_residual(truth: float, forecast: float) -> float:
    """Nonconformity score: truth minus forecast, in $/MWh."""
    if not (np.isfinite(truth) and np.isfinite(forecast)):
        raise ValueError(f"non-finite input: truth={truth}, forecast={forecast}")
    return truth - forecast


def empirical_quantile(scores: np.ndarray, p: float) -> float:
    """Conformal finite-sample quantile: sorted element ceil(p*(n+1)) - 1, clamped."""
    scores = np.sort(np.asarray(scores, dtype=np.float64))
    n = scores.size
    if n == 0:
        raise ValueError("empty score set")
    idx = math.ceil(p * (n + 1)) - 1
    idx = min(max(idx, 0), n - 1)
    return float(scores[idx])


def _saturation(x: float, t: int, cfg: TrackerConfig) -> float:
    if cfg.saturation == "linear":
        return x
    c_t = cfg.sat_c * max(t, 1) ** cfg.sat_h_exponent
    return math.tan(min(max(x / c_t, -_TAN_CLIP), _TAN_CLIP))


def initialize_tracker(
    calibration_scores: np.ndarray, cfg: TrackerConfig, side: str
) -> QuantileTrackerState:
    """Seed a one-sided tracker from calibration scores.

    The upper side starts at the (1 - alpha/2) empirical quantile of the
    scores, the lower side at the (alpha/2) quantile. The score history is
    seeded with the most recent window of calibration scores so the rolling
    scorecaster starts warm.
    """
    scores = np.asarray(calibration_scores, dtype=np.float64)
    if scores.size < MIN_CALIBRATION_SCORES:
        raise TooFewScoresError(
            f"need >= {MIN_CALIBRATION_SCORES} calibration scores, got {scores.size}"
        )
    if side not in (UPPER, LOWER):
        raise ValueError(f"side must be {UPPER!r} or {LOWER!r}, got {side!r}")
    level = 1.0 - cfg.side_alpha if side == UPPER else cfg.side_alpha
    q0 = empirical_quantile(scores, level)
    gain_scale = empirical_quantile(np.abs(scores), 0.9)
    history = tuple(float(s) for s in scores[-cfg.window :]) if cfg.scorecaster == "rolling_quantile" else ()
    return QuantileTrackerState(
        side=side,
        q=q0,
        q_base=q0,
        err_integral=0.0,
        scores=history,
        t=0,
        gain_scale=gain_scale,
    )


def tracker_step(
    state: QuantileTrackerState, new_score: float, cfg: TrackerConfig
) -> tuple[QuantileTrackerState, float]:
    """Advance one tracker by one realized score.

    The miss indicator is evaluated against the deployed quantile (upper side:
    score above q; lower side: score below q), the coverage-error integral is
    updated, the scorecaster refreshes the quantile baseline, and the integral
    correction is applied on top. Returns the new state and its quantile.
    """
    if not np.isfinite(new_score):
        raise ValueError(f"non-finite score: {new_score}")
    side_alpha = cfg.side_alpha
    miss = new_score > state.q if state.side == UPPER else new_score < state.q
    err_integral = state.err_integral + ((1.0 if miss else 0.0) - side_alpha)
    t = state.t + 1

    if cfg.scorecaster == "rolling_quantile":
        history = (state.scores + (float(new_score),))[-cfg.window :]
        level = 1.0 - side_alpha if state.side == UPPER else side_alpha
        q_base = empirical_quantile(np.asarray(history), level)
    else:
        history = state.scores
        q_base = state.q_base

    correction = cfg.integral_gain * state.gain_scale * _saturation(err_integral, t, cfg)
    q_next = q_base + state.direction * correction
    new_state = replace(
        state,
        q=q_next,
        q_base=q_base,
        err_integral=err_integral,
        scores=history,
        t=t,
    )
    return new_state, q_next


def build_interval(point_forecast: float, q_lower: float, q_upper: float) -> PredictionInterval:
    """Interval around a point forecast from the two tracker quantiles.

    If the trackers cross (q_lower > q_upper), both collapse to their midpoint
    and the interval degenerates to zero width.
    """
    if q_lower > q_upper:
        mid = 0.5 * (q_lower + q_upper)
        q_lower = q_upper = mid
    return PredictionInterval(lower=point_forecast + q_lower, upper=point_forecast + q_upper)


def initialize_aci(
    calibration_abs_scores: np.ndarray, alpha: float = 0.05, gamma: float = 0.05
) -> AciState:
    scores = np.asarray(calibration_abs_scores, dtype=np.float64)
    if scores.size < MIN_CALIBRATION_SCORES:
        raise TooFewScoresError(
            f"need >= {MIN_CALIBRATION_SCORES} calibration scores, got {scores.size}"
        )
    return AciState(alpha_t=alpha, alpha_target=alpha, gamma=gamma, calibration_scores=scores)


def aci_step(state: AciState, miss: bool) -> tuple[AciState, float]:
    """One ACI update: shift the working level by gamma, then re-read the quantile.

    The working level can leave (0, 1): at or below 0 the quantile is +inf
    (infinitely wide interval); at or above 1 it is -inf (empty set, rendered
    as a zero-width interval at the point forecast).
    """
    alpha_next = state.alpha_t + state.gamma * (state.alpha_target - (1.0 if miss else 0.0))
    if alpha_next <= 0.0:
        quantile = math.inf
    elif alpha_next >= 1.0:
        quantile = -math.inf
    else:
        quantile = empirical_quantile(state.calibration_scores, 1.0 - alpha_next)
    return replace(state, alpha_t=alpha_next), quantile


def aci_interval(point_forecast: float, quantile: float) -> PredictionInterval:
    """Symmetric ACI interval; -inf quantile means the empty-set convention."""
    if quantile == -math.inf:
        return PredictionInterval(lower=point_forecast, upper=point_forecast)
    return PredictionInterval(lower=point_forecast - quantile, upper=point_forecast + quantile)


def coverage(intervals, truths) -> float:
    """Fraction of truths inside their interval (bounds inclusive)."""
    lower, upper = _interval_arrays(intervals)
    truths = np.asarray(truths, dtype=np.float64)
    if truths.size == 0:
        raise ValueError("empty input")
    if truths.shape != lower.shape:
        raise ValueError(f"length mismatch: {truths.shape} truths vs {lower.shape} intervals")
    covered = (lower <= truths) & (truths <= upper)
    return float(np.mean(covered))


def mean_width_by_horizon(lower: np.ndarray, upper: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-offset mean width over finite intervals, plus per-offset count of
    infinite-width intervals excluded from the mean.

    Input arrays are (n_origins, horizon); returns (mean_width, n_infinite),
    each of length horizon. An offset whose intervals are all infinite gets
    NaN mean width.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if lower.size == 0:
        raise ValueError("empty panel")
    widths = upper - lower
    finite = np.isfinite(widths)
    n_infinite = (~finite).sum(axis=0)
    sums = np.where(finite, widths, 0.0).sum(axis=0)
    counts = finite.sum(axis=0)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return means, n_infinite.astype(np.int64)


def _interval_arrays(intervals) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(intervals, tuple) and len(intervals) == 2:
        return (
            np.asarray(intervals[0], dtype=np.float64),
            np.asarray(intervals[1], dtype=np.float64),
        )
    lower = np.array([iv.lower for iv in intervals], dtype=np.float64)
    upper = np.array([iv.upper for iv in intervals], dtype=np.float64)
    return lower, upper


class OnlineIntervalTracker:
    """Streams per-offset tracker pairs through calibration and test time.

    One independent (upper, lower) tracker pair exists per offset h in 1..H.
    Pair h is calibrated on residuals whose realization falls inside the
    calibration range and is updated online exactly once per realized
    interval, with the natural h-step lag: the score realized at time t comes
    from the forecast made at origin t - h.
    """

    def __init__(
        self,
        series: PriceSeries,
        panel: ForecastPanel,
        split: DatasetSplit,
        cfg: TrackerConfig,
    ):
        split.validate_for(series)
        self.series = series
        self.panel = panel
        self.split = split
        self.cfg = cfg
        h = panel.horizon
        prices = series.prices
        t1 = split.n_calibration

        self.states: list[dict[str, QuantileTrackerState]] = []
        for offset in range(1, h + 1):
            cal = _panel_residuals(prices, panel, offset, stop_realization=t1)
            self.states.append(
                {
                    UPPER: initialize_tracker(cal, cfg, UPPER),
                    LOWER: initialize_tracker(cal, cfg, LOWER),
                }
            )
        # Realization times <= cursor have been consumed.
        self._cursor = t1 - 1

    @property
    def horizon(self) -> int:
        return self.panel.horizon

    def advance_to(self, t: int) -> None:
        """Consume realized prices up to and including time t (idempotent)."""
        prices = self.series.prices
        panel = self.panel
        while self._cursor < t:
            r = self._cursor + 1
            for offset in range(1, self.horizon + 1):
                origin = r - offset
                if origin in panel.origins:
                    score = prices[r] - panel.forecasts(origin)[offset - 1]
                    pair = self.states[offset - 1]
                    pair[UPPER], _ = tracker_step(pair[UPPER], score, self.cfg)
                    pair[LOWER], _ = tracker_step(pair[LOWER], score, self.cfg)
            self._cursor = r

    def intervals_at(self, origin: int) -> tuple[np.ndarray, np.ndarray]:
        """Interval bounds around the forecasts made at ``origin``.

        Returns (lower, upper), each length H. Call advance_to(origin) first
        so the trackers have seen everything observable at decision time.
        """
        forecasts = self.panel.forecasts(origin)
        lower = np.empty(self.horizon)
        upper = np.empty(self.horizon)
        for i in range(self.horizon):
            pair = self.states[i]
            iv = build_interval(forecasts[i], pair[LOWER].q, pair[UPPER].q)
            lower[i], upper[i] = iv.lower, iv.upper
        return lower, upper

    def calibration_abs_p99(self) -> float:
        """99th percentile of absolute offset-1 calibration residuals (clamp scale)."""
        cal = _panel_residuals(
            self.series.prices, self.panel, 1, stop_realization=self.split.n_calibration
        )
        return empirical_quantile(np.abs(cal), 0.99)


class OnlineAciTracker:
    """Per-offset ACI baseline driven by the same residual stream."""

    def __init__(
        self,
        series: PriceSeries,
        panel: ForecastPanel,
        split: DatasetSplit,
        alpha: float = 0.05,
        gamma: float = 0.05,
    ):
        split.validate_for(series)
        self.series = series
        self.panel = panel
        self.split = split
        t1 = split.n_calibration
        self.states: list[AciState] = []
        self.quantiles: list[float] = []
        for offset in range(1, panel.horizon + 1):
            cal = np.abs(_panel_residuals(series.prices, panel, offset, stop_realization=t1))
            state = initialize_aci(cal, alpha=alpha, gamma=gamma)
            self.states.append(state)
            self.quantiles.append(empirical_quantile(state.calibration_scores, 1.0 - alpha))
        self._cursor = t1 - 1

    @property
    def horizon(self) -> int:
        return self.panel.horizon

    def advance_to(self, t: int) -> None:
        prices = self.series.prices
        panel = self.panel
        while self._cursor < t:
            r = self._cursor + 1
            for offset in range(1, self.horizon + 1):
                origin = r - offset
                if origin in panel.origins:
                    abs_score = abs(prices[r] - panel.forecasts(origin)[offset - 1])
                    miss = abs_score > self.quantiles[offset - 1]
                    self.states[offset - 1], self.quantiles[offset - 1] = aci_step(
                        self.states[offset - 1], miss
                    )
            self._cursor = r

    def intervals_at(self, origin: int) -> tuple[np.ndarray, np.ndarray]:
        forecasts = self.panel.forecasts(origin)
        lower = np.empty(self.horizon)
        upper = np.empty(self.horizon)
        for i in range(self.horizon):
            iv = aci_interval(forecasts[i], self.quantiles[i])
            lower[i], upper[i] = iv.lower, iv.upper
        return lower, upper


@dataclass
class IntervalEvalResult:
    """Flat per-(origin, offset) interval log from a streaming evaluation."""

    origin: np.ndarray
    offset: np.ndarray
    point_forecast: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    realized: np.ndarray
    covered: np.ndarray
    horizon: int

    def coverage_by_horizon(self) -> np.ndarray:
        out = np.empty(self.horizon)
        for h in range(1, self.horizon + 1):
            mask = self.offset == h
            out[h - 1] = float(np.mean(self.covered[mask]))
        return out

    def width_by_horizon(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.origin.size // self.horizon
        shape = (n, self.horizon)
        return mean_width_by_horizon(
            self.lower.reshape(shape), self.upper.reshape(shape)
        )

    def overall_coverage(self) -> float:
        return float(np.mean(self.covered))

    def n_infinite(self) -> int:
        return int(np.sum(~np.isfinite(self.upper - self.lower)))


def evaluate_stream(
    series: PriceSeries,
    panel: ForecastPanel,
    split: DatasetSplit,
    tracker,
) -> IntervalEvalResult:
    """Run a streaming tracker over the test range and log every interval.

    ``tracker`` is an OnlineIntervalTracker or OnlineAciTracker. Origins are
    the test-range indices whose full forecast horizon realizes inside the
    series.
    """
    h = panel.horizon
    prices = series.prices
    origins = [t for t in split.test_range if t in panel.origins]
    if not origins:
        raise ValueError("no usable test origins: series too short for the horizon")

    rows_origin, rows_offset, rows_point = [], [], []
    rows_lower, rows_upper, rows_real = [], [], []
    for t in origins:
        tracker.advance_to(t)
        lower, upper = tracker.intervals_at(t)
        forecasts = panel.forecasts(t)
        for i in range(h):
            rows_origin.append(t)
            rows_offset.append(i + 1)
            rows_point.append(forecasts[i])
            rows_lower.append(lower[i])
            rows_upper.append(upper[i])
            rows_real.append(prices[t + i + 1])

    lower = np.asarray(rows_lower)
    upper = np.asarray(rows_upper)
    realized = np.asarray(rows_real)
    covered = (lower <= realized) & (realized <= upper)
    return IntervalEvalResult(
        origin=np.asarray(rows_origin, dtype=np.int64),
        offset=np.asarray(rows_offset, dtype=np.int64),
        point_forecast=np.asarray(rows_point),
        lower=lower,
        upper=upper,
        realized=realized,
        covered=covered,
        horizon=h,
    )


def _panel_residuals(
    prices: np.ndarray, panel: ForecastPanel, offset: int, stop_realization: int
) -> np.ndarray:
    """Signed residuals for one offset with realization index < stop_realization."""
    first = panel.origin_start
    last_origin = stop_realization - 1 - offset
    if last_origin < first:
        return np.empty(0)
    origins = np.arange(first, min(last_origin, panel.origins[-1]) + 1)
    truth = prices[origins + offset]
    forecasts = panel.values[origins - first, offset - 1]
    return truth - forecasts

"""Tests for price series loading, synthetic generation, and synthetic forecasts."""

import math

import numpy as np
import pandas as pd
import pytest

from stoarb.market_data import (
    DatasetSplit,
    ForecastPanel,
    NonUniformSpacingError,
    PriceDataError,
    PriceSeries,
    SyntheticForecasterConfig,
    SyntheticProfile,
    generate_synthetic_series,
    load_price_csv,
    synthetic_forecast,
    write_price_csv,
)


def make_series(prices, step_hours=1):
    return PriceSeries(
        start_time=pd.Timestamp("2022-01-01 00:00"),
        step=pd.Timedelta(hours=step_hours),
        prices=np.asarray(prices, dtype=np.float64),
    )


class TestPriceSeries:
    def test_rejects_single_price(self):
        with pytest.raises(PriceDataError):
            make_series([10.0])

    def test_rejects_nan_and_inf(self):
        with pytest.raises(PriceDataError):
            make_series([1.0, np.nan, 3.0])
        with pytest.raises(PriceDataError):
            make_series([1.0, np.inf])

    def test_rejects_nonpositive_step(self):
        with pytest.raises(PriceDataError):
            make_series([1.0, 2.0], step_hours=0)

    def test_negative_prices_allowed(self):
        s = make_series([-12.5, 40.0])
        assert s.prices[0] == -12.5

    def test_prices_are_read_only(self):
        s = make_series([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            s.prices[0] = 99.0

    def test_timestamps_grid(self):
        s = make_series([1.0, 2.0, 3.0])
        stamps = s.timestamps()
        assert len(stamps) == 3
        assert stamps[0] == pd.Timestamp("2022-01-01 00:00")
        assert stamps[2] - stamps[1] == pd.Timedelta(hours=1)


class TestDatasetSplit:
    def test_ranges(self):
        split = DatasetSplit(n_calibration=336, n_test=100)
        assert split.calibration_range == range(0, 336)
        assert split.test_range == range(336, 436)
        assert split.test_end == 436

    def test_rejects_empty_sides(self):
        with pytest.raises(ValueError):
            DatasetSplit(n_calibration=0, n_test=5)
        with pytest.raises(ValueError):
            DatasetSplit(n_calibration=5, n_test=0)

    def test_validate_for_too_short_series(self):
        split = DatasetSplit(n_calibration=3, n_test=3)
        with pytest.raises(ValueError):
            split.validate_for(make_series([1.0, 2.0, 3.0]))


class TestLoadPriceCsv:
    def test_basic_parse(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T00:00:00,31.25\n"
            "2023-05-01T01:00:00,-4.5\n"
            "2023-05-01T02:00:00,108.0\n"
        )
        s = load_price_csv(p)
        np.testing.assert_array_equal(s.prices, [31.25, -4.5, 108.0])
        assert s.step == pd.Timedelta(hours=1)
        assert s.start_time == pd.Timestamp("2023-05-01 00:00")

    def test_custom_column_names(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text("ts,lmp\n2023-05-01T00:00:00,1.0\n2023-05-01T01:00:00,2.0\n")
        s = load_price_csv(p, timestamp_column="ts", price_column="lmp")
        np.testing.assert_array_equal(s.prices, [1.0, 2.0])

    def test_missing_column(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text("timestamp,cost\n2023-05-01T00:00:00,1.0\n")
        with pytest.raises(PriceDataError, match="price"):
            load_price_csv(p)

    def test_gap_rejected(self, tmp_path):
        # Two-hour jump in an hourly file: a gap, not a different grid.
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T00:00:00,1.0\n"
            "2023-05-01T01:00:00,2.0\n"
            "2023-05-01T03:00:00,3.0\n"
        )
        with pytest.raises(NonUniformSpacingError):
            load_price_csv(p)

    def test_duplicate_stamp_rejected(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T00:00:00,1.0\n"
            "2023-05-01T00:00:00,2.0\n"
        )
        with pytest.raises(NonUniformSpacingError):
            load_price_csv(p)

    def test_out_of_order_rejected(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T01:00:00,1.0\n"
            "2023-05-01T00:00:00,2.0\n"
        )
        with pytest.raises(NonUniformSpacingError):
            load_price_csv(p)

    def test_non_numeric_price_names_row(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T00:00:00,1.0\n"
            "2023-05-01T01:00:00,oops\n"
        )
        with pytest.raises(PriceDataError, match="row 1"):
            load_price_csv(p)

    def test_single_row_rejected(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text("timestamp,price\n2023-05-01T00:00:00,1.0\n")
        with pytest.raises(PriceDataError):
            load_price_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_price_csv(tmp_path / "nope.csv")

    def test_fifteen_minute_grid_accepted(self, tmp_path):
        p = tmp_path / "prices.csv"
        p.write_text(
            "timestamp,price\n"
            "2023-05-01T00:00:00,1.0\n"
            "2023-05-01T00:15:00,2.0\n"
            "2023-05-01T00:30:00,3.0\n"
        )
        s = load_price_csv(p)
        assert s.step == pd.Timedelta(minutes=15)


class TestRoundTrip:
    def test_write_then_load_is_identity(self, tmp_path):
        # Awkward binary floats on purpose: repr precision must survive.
        prices = [0.1 + 0.2, -7.125, 1e-9, 12345.678901234567]
        s = make_series(prices)
        path = tmp_path / "out.csv"
        write_price_csv(s, path)
        back = load_price_csv(path)
        np.testing.assert_array_equal(back.prices, s.prices)
        assert back.start_time == s.start_time
        assert back.step == s.step

    def test_round_trip_synthetic(self, tmp_path):
        s = generate_synthetic_series(length=200, seed=7)
        path = tmp_path / "synth.csv"
        write_price_csv(s, path)
        back = load_price_csv(path)
        np.testing.assert_array_equal(back.prices, s.prices)


class TestSyntheticSeries:
    def test_deterministic_per_seed(self):
        a = generate_synthetic_series(length=500, seed=42)
        b = generate_synthetic_series(length=500, seed=42)
        c = generate_synthetic_series(length=500, seed=43)
        np.testing.assert_array_equal(a.prices, b.prices)
        assert not np.array_equal(a.prices, c.prices)

    def test_all_randomness_off_gives_constant_base(self):
        profile = SyntheticProfile(
            base=30.0, daily_amplitude=0.0, ar_coeff=0.5, noise_sd=0.0,
            spike_prob=0.0, spike_magnitude=120.0,
        )
        s = generate_synthetic_series(length=100, seed=0, profile=profile)
        np.testing.assert_array_equal(s.prices, np.full(100, 30.0))

    def test_daily_cycle_peaks_evening_troughs_morning(self):
        profile = SyntheticProfile(
            base=50.0, daily_amplitude=20.0, ar_coeff=0.0, noise_sd=0.0,
            spike_prob=0.0,
        )
        s = generate_synthetic_series(length=48, seed=0, profile=profile)
        # sin peaks at hour 18 (value +1) and troughs at hour 6 (value -1)
        assert s.prices[18] == pytest.approx(70.0)
        assert s.prices[6] == pytest.approx(30.0)
        assert s.prices[42] == pytest.approx(70.0)
        assert int(np.argmax(s.prices[:24])) == 18
        assert int(np.argmin(s.prices[:24])) == 6

    def test_ar_noise_matches_stationary_moments(self):
        # AR(1) with coeff 0.7 and innovation sd 9 has stationary sd
        # 9 / sqrt(1 - 0.49) = 12.60 and lag-1 autocorrelation 0.7.
        profile = SyntheticProfile(
            base=0.0, daily_amplitude=0.0, ar_coeff=0.7, noise_sd=9.0,
            spike_prob=0.0,
        )
        s = generate_synthetic_series(length=40000, seed=11, profile=profile)
        x = s.prices
        expected_sd = 9.0 / math.sqrt(1.0 - 0.7**2)
        assert np.std(x) == pytest.approx(expected_sd, rel=0.05)
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert lag1 == pytest.approx(0.7, abs=0.05)

    def test_spike_count_within_binomial_bounds(self):
        # With everything else off, prices are exactly 0 or the spike value,
        # so the spike count is observable. Count ~ Binomial(5000, 0.01):
        # mean 50, sd 7.04; [30, 70] is a ~4.2 sd window (miss prob < 1e-3,
        # and the draw is deterministic per seed anyway).
        profile = SyntheticProfile(
            base=0.0, daily_amplitude=0.0, ar_coeff=0.0, noise_sd=0.0,
            spike_prob=0.01, spike_magnitude=120.0,
        )
        s = generate_synthetic_series(length=5000, seed=3, profile=profile)
        count = int(np.sum(s.prices == 120.0))
        assert np.all((s.prices == 0.0) | (s.prices == 120.0))
        assert 30 <= count <= 70

    def test_spikes_are_positive_additions(self):
        quiet = SyntheticProfile(
            base=40.0, daily_amplitude=0.0, ar_coeff=0.0, noise_sd=0.0,
            spike_prob=0.2, spike_magnitude=60.0,
        )
        s = generate_synthetic_series(length=2000, seed=5, profile=quiet)
        assert set(np.unique(s.prices)) == {40.0, 100.0}

    def test_mean_tracks_base_plus_expected_spikes(self):
        s = generate_synthetic_series(length=30000, seed=9)
        # defaults: base 45, spikes add prob * magnitude = 1.2 on average
        assert float(np.mean(s.prices)) == pytest.approx(46.2, abs=1.0)

    def test_too_short(self):
        with pytest.raises(ValueError):
            generate_synthetic_series(length=1, seed=0)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            SyntheticProfile(ar_coeff=1.0)
        with pytest.raises(ValueError):
            SyntheticProfile(spike_prob=1.5)
        with pytest.raises(ValueError):
            SyntheticProfile(noise_sd=-1.0)


class TestForecastPanel:
    def test_shape_and_origins(self):
        panel = ForecastPanel(origin_start=0, values=np.zeros((10, 4)))
        assert panel.horizon == 4
        assert panel.origins == range(0, 10)

    def test_forecasts_lookup(self):
        values = np.arange(12, dtype=np.float64).reshape(4, 3)
        panel = ForecastPanel(origin_start=5, values=values)
        np.testing.assert_array_equal(panel.forecasts(6), [3.0, 4.0, 5.0])
        with pytest.raises(KeyError):
            panel.forecasts(4)
        with pytest.raises(KeyError):
            panel.forecasts(9)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            ForecastPanel(origin_start=0, values=np.array([[np.nan, 1.0]]))


class TestSyntheticForecast:
    def setup_method(self):
        self.series = generate_synthetic_series(length=400, seed=21)
        self.split = DatasetSplit(n_calibration=200, n_test=150)

    def test_sigma_zero_reproduces_truth_exactly(self):
        cfg = SyntheticForecasterConfig(sigma=0.0, horizon=6, seed=0)
        panel = synthetic_forecast(self.series, self.split, cfg)
        assert panel.origins == range(0, 400 - 6)
        for origin in (0, 57, 393):
            np.testing.assert_array_equal(
                panel.forecasts(origin), self.series.prices[origin + 1 : origin + 7]
            )

    def test_deterministic_per_seed(self):
        cfg = SyntheticForecasterConfig(sigma=5.0, horizon=6, seed=14)
        a = synthetic_forecast(self.series, self.split, cfg)
        b = synthetic_forecast(self.series, self.split, cfg)
        c = synthetic_forecast(
            self.series, self.split, SyntheticForecasterConfig(sigma=5.0, horizon=6, seed=15)
        )
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_noise_sd_scales_with_sqrt_offset(self):
        series = generate_synthetic_series(length=12000, seed=2)
        split = DatasetSplit(n_calibration=6000, n_test=5000)
        sigma = 7.0
        cfg = SyntheticForecasterConfig(sigma=sigma, horizon=4, seed=8)
        panel = synthetic_forecast(series, split, cfg)

        offsets = np.arange(1, 5)
        targets = np.arange(len(panel.origins))[:, None] + offsets[None, :]
        residuals = panel.values - series.prices[targets]

        sds = residuals.std(axis=0)
        assert sds[0] == pytest.approx(sigma, rel=0.05)
        np.testing.assert_allclose(sds, sigma * np.sqrt(offsets), rtol=0.05)
        # residual noise is drawn independently per offset
        corr = np.corrcoef(residuals.T)
        off_diag = corr[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off_diag)) < 0.05

    def test_horizon_too_long(self):
        series = generate_synthetic_series(length=10, seed=0)
        split = DatasetSplit(n_calibration=5, n_test=5)
        with pytest.raises(ValueError):
            synthetic_forecast(series, split, SyntheticForecasterConfig(sigma=1.0, horizon=10))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticForecasterConfig(sigma=-1.0)
        with pytest.raises(ValueError):
            SyntheticForecasterConfig(sigma=1.0, horizon=0)

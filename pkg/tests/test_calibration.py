import numpy as np
import pytest
from sklearn.base import clone

from basketexec import (
    BarSeries,
    DriftCovarianceCalibrator,
    calibrate,
    estimate_cov,
    estimate_mu,
    load_bars,
    simulate_price_paths,
)
from basketexec.calibration import result_to_preset
from basketexec.errors import (
    InsufficientData,
    MissingFile,
    MissingSymbol,
    NonMonotoneTimestamps,
    ParseError,
)
from basketexec.market import BasketPreset


def series_from_prices(prices, tau=1.0):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    return BarSeries(
        symbols=tuple(f"S{i}" for i in range(prices.shape[1])),
        timestamps=np.arange(prices.shape[0], dtype=float),
        prices=prices,
        volumes=np.zeros_like(prices),
        tau=tau,
    )


class TestLoadBars:
    def write(self, tmp_path, text):
        path = tmp_path / "bars.csv"
        path.write_text(text)
        return path

    def test_well_formed_two_symbols(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "100,AA,50.0,10",
            "100,BB,20.0,5",
            "160,AA,51.0,11",
            "160,BB,19.5,6",
        ]))
        series = load_bars(path, ["AA", "BB"])
        assert series.n_bars == 2
        assert series.fills == 0
        assert series.dropped == 0
        assert np.array_equal(series.prices, [[50.0, 20.0], [51.0, 19.5]])

    def test_missing_bar_forward_filled(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "100,AA,50.0,10",
            "100,BB,20.0,5",
            "160,AA,51.0,11",
            "220,AA,52.0,12",
            "220,BB,21.0,6",
        ]))
        series = load_bars(path, ["AA", "BB"])
        assert series.fills == 1
        assert series.prices[1, 1] == 20.0  # carried forward
        assert series.volumes[1, 1] == 0.0

    def test_shuffled_timestamps_rejected(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "160,AA,51.0,11",
            "100,AA,50.0,10",
        ]))
        with pytest.raises(NonMonotoneTimestamps):
            load_bars(path, ["AA"])

    def test_parse_error_carries_line(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "100,AA,50.0,10",
            "101,AA,not_a_price,10",
        ]))
        with pytest.raises(ParseError) as err:
            load_bars(path, ["AA"])
        assert err.value.line == 3

    def test_bad_header(self, tmp_path):
        path = self.write(tmp_path, "time,sym,px,vol\n1,AA,2,3\n")
        with pytest.raises(ParseError):
            load_bars(path, ["AA"])

    def test_missing_symbol(self, tmp_path):
        path = self.write(tmp_path, "timestamp,symbol,price,volume\n100,AA,50,1\n")
        with pytest.raises(MissingSymbol):
            load_bars(path, ["AA", "ZZ"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_bars(tmp_path / "none.csv", ["AA"])

    def test_leading_rows_dropped(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "40,AA,49.0,9",
            "100,AA,50.0,10",
            "100,BB,20.0,5",
            "160,AA,51.0,11",
            "160,BB,19.5,6",
        ]))
        series = load_bars(path, ["AA", "BB"])
        assert series.dropped == 1
        assert series.n_bars == 2

    def test_iso_timestamps(self, tmp_path):
        path = self.write(tmp_path, "\n".join([
            "timestamp,symbol,price,volume",
            "2017-09-05T09:30:00,AA,50.0,10",
            "2017-09-05T09:31:00,AA,50.5,12",
        ]))
        series = load_bars(path, ["AA"])
        assert series.n_bars == 2
        assert series.timestamps[1] - series.timestamps[0] == 60.0


class TestEstimators:
    def test_constant_prices_zero_drift(self):
        series = series_from_prices([100.0, 100.0, 100.0])
        assert np.array_equal(estimate_mu(series), [0.0])

    def test_two_bar_hand_value(self):
        series = series_from_prices([100.0, 101.0])
        assert estimate_mu(series)[0] == pytest.approx(0.01, rel=1e-12)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            estimate_mu(series_from_prices([100.0]))
        with pytest.raises(InsufficientData):
            estimate_cov(series_from_prices([100.0, 101.0]))

    def test_constant_prices_zero_cov(self):
        series = series_from_prices([[100.0, 50.0]] * 5)
        assert np.allclose(estimate_cov(series), 0.0, atol=1e-30)

    def test_perfectly_correlated_pair(self):
        rng = np.random.default_rng(3)
        r = rng.normal(0, 0.01, 500)
        base = 100.0 * np.cumprod(1.0 + np.concatenate([[0.0], r]))
        prices = np.column_stack([base, 3.0 * base])
        series = series_from_prices(prices)
        sigma = estimate_cov(series)
        geo = np.sqrt(sigma[0, 0] * sigma[1, 1])
        assert sigma[0, 1] == pytest.approx(geo, abs=1e-10)

    def test_price_scale_invariance(self):
        rng = np.random.default_rng(5)
        r = rng.normal(0, 0.01, 300)
        base = 100.0 * np.cumprod(1.0 + np.concatenate([[0.0], r]))
        a = calibrate(series_from_prices(base))
        b = calibrate(series_from_prices(250.0 * base))
        assert a.mu[0] == pytest.approx(b.mu[0], rel=1e-9)
        assert a.sigma[0, 0] == pytest.approx(b.sigma[0, 0], rel=1e-9)

    def test_round_trip_single_asset(self, toy_preset):
        # the toy drift is -0.5%/step, so keep the horizon short enough that
        # prices stay far from the subnormal range
        paths = simulate_price_paths(toy_preset, 20_000, np.random.default_rng(8))
        series = series_from_prices(paths[:, 0], tau=toy_preset.tau)
        result = calibrate(series)
        assert abs(result.mu[0] - toy_preset.mu[0]) < 3 * result.se_mu[0]
        assert abs(result.sigma[0, 0] - toy_preset.sigma[0, 0]) < 3 * result.se_sigma[0, 0]

    def test_tau_scale_consistency(self, toy_preset):
        # halving tau and regenerating leaves per-time-unit estimates intact
        half = toy_preset.with_updates(tau=0.5)
        paths = simulate_price_paths(half, 40_000, np.random.default_rng(9))
        series = series_from_prices(paths[:, 0], tau=0.5)
        result = calibrate(series)
        assert abs(result.mu[0] - toy_preset.mu[0]) < 3 * result.se_mu[0]
        assert abs(result.sigma[0, 0] - toy_preset.sigma[0, 0]) < 3 * result.se_sigma[0, 0]

    def test_result_psd_and_symmetric(self, rng):
        prices = 100.0 * np.cumprod(1.0 + rng.normal(0, 0.01, (400, 4)), axis=0)
        result = calibrate(series_from_prices(prices))
        assert np.array_equal(result.sigma, result.sigma.T)
        assert np.linalg.eigvalsh(result.sigma).min() >= -1e-18
        assert result.repair == 0.0
        assert result.n_samples == 399


class TestPresetAssembly:
    def test_result_to_preset(self):
        rng = np.random.default_rng(11)
        prices = 100.0 * np.cumprod(1.0 + rng.normal(0, 0.005, (300, 2)), axis=0)
        series = series_from_prices(prices)
        preset = result_to_preset(calibrate(series), series, max_clip=[100, 50])
        assert isinstance(preset, BasketPreset)
        assert np.array_equal(preset.max_clip, [100.0, 50.0])
        assert np.array_equal(preset.arrival_price, prices[-1])
        assert np.array_equal(preset.inventory, [10000.0, 5000.0])


class TestCalibratorEstimator:
    def test_fit_on_array(self):
        rng = np.random.default_rng(13)
        prices = 50.0 * np.cumprod(1.0 + rng.normal(0.0001, 0.01, (1000, 3)), axis=0)
        cal = DriftCovarianceCalibrator(tau=1.0).fit(prices)
        assert cal.mu_.shape == (3,)
        assert cal.sigma_.shape == (3, 3)
        assert cal.n_samples_ == 999

    def test_sklearn_protocol(self):
        cal = DriftCovarianceCalibrator(tau=2.0)
        assert cal.get_params() == {"tau": 2.0}
        again = clone(cal)
        assert again.get_params() == {"tau": 2.0}
        cal.set_params(tau=0.5)
        assert cal.tau == 0.5

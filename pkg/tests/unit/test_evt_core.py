import numpy as np
import pytest
from scipy import stats

from hawkes_pot.errors import DataError, ParameterError
from hawkes_pot.evt_core import (
    GpdParams,
    MarkedEventSeries,
    RawSeries,
    ThresholdSpec,
    extract_exceedances,
    gpd_cdf,
    gpd_logpdf,
    gpd_logpdf_original_scale,
    gpd_loglik,
    gpd_quantile,
    gpd_sample,
    gpd_survival,
    set_scale_factor,
)


class TestGpdDensity:
    def test_exponential_form(self):
        assert gpd_logpdf(1.0, GpdParams(1.0, 0.0)) == pytest.approx(-1.0)

    def test_heavy_tail_value(self):
        assert gpd_logpdf(1.0, GpdParams(1.0, 0.5)) == pytest.approx(-3.0 * np.log(1.5), abs=1e-10)
        assert gpd_logpdf(1.0, GpdParams(1.0, 0.5)) == pytest.approx(-1.21640, abs=1e-5)

    def test_outside_support(self):
        assert gpd_logpdf(3.0, GpdParams(1.0, -0.5)) == -np.inf
        assert gpd_logpdf(-0.1, GpdParams(1.0, 0.2)) == -np.inf

    def test_bad_scale_rejected(self):
        with pytest.raises(ParameterError):
            GpdParams(0.0, 0.1)
        with pytest.raises(ParameterError):
            gpd_loglik(1.0, -1.0, 0.1)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 5.0])
    @pytest.mark.parametrize("y", [0.1, 1.0, 10.0])
    def test_continuity_at_zero_shape(self, y, sigma):
        near = gpd_logpdf(y, GpdParams(sigma, 1e-9))
        exact = gpd_logpdf(y, GpdParams(sigma, 0.0))
        assert abs(near - exact) < 1e-6

    def test_array_shape_broadcasts(self):
        y = np.array([0.5, 1.0, 2.0])
        xi = np.array([[0.0], [0.3]])
        out = gpd_loglik(y[None, :], 1.0, xi)
        assert out.shape == (2, 3)
        np.testing.assert_allclose(out[0], -y)
        np.testing.assert_allclose(out[1], gpd_logpdf(y, GpdParams(1.0, 0.3)))

    def test_density_matches_cdf_derivative(self):
        p = GpdParams(1.3, 0.25)
        z = np.array([0.2, 1.0, 4.0])
        h = 1e-6
        numeric = (gpd_cdf(z + h, p) - gpd_cdf(z - h, p)) / (2 * h)
        np.testing.assert_allclose(np.exp(gpd_logpdf(z, p)), numeric, rtol=1e-5)

    def test_original_scale_jacobian(self):
        p = GpdParams(1.0, 0.0)
        c = 2.5
        assert gpd_logpdf_original_scale(c, p, c) == pytest.approx(-1.0 - np.log(c))


class TestGpdCdfQuantile:
    def test_cdf_values(self):
        assert gpd_cdf(0.0, GpdParams(2.0, 0.3)) == 0.0
        assert gpd_cdf(2.0, GpdParams(1.0, 0.0)) == pytest.approx(1 - np.exp(-2.0))
        assert gpd_cdf(1.0, GpdParams(1.0, 1.0)) == pytest.approx(0.5)

    def test_cdf_is_one_past_finite_endpoint(self):
        p = GpdParams(1.0, -0.5)
        assert p.upper_endpoint == pytest.approx(2.0)
        assert gpd_cdf(3.0, p) == 1.0
        assert gpd_survival(3.0, p) == 0.0

    def test_quantile_values(self):
        assert gpd_quantile(0.5, GpdParams(1.0, 0.0)) == pytest.approx(np.log(2.0))
        assert gpd_quantile(0.5, GpdParams(1.0, 1.0)) == pytest.approx(1.0)

    def test_quantile_inverts_cdf(self):
        p = GpdParams(0.7, 0.2)
        q = np.array([0.01, 0.3, 0.9, 0.999])
        np.testing.assert_allclose(gpd_cdf(gpd_quantile(q, p), p), q, rtol=1e-10)

    def test_quantile_level_range(self):
        with pytest.raises(ParameterError):
            gpd_quantile(1.0, GpdParams(1.0, 0.1))

    def test_sampling_is_reproducible(self):
        p = GpdParams(1.0, 0.15)
        a = gpd_sample(p, np.random.default_rng(3), size=100)
        b = gpd_sample(p, np.random.default_rng(3), size=100)
        np.testing.assert_array_equal(a, b)

    def test_sample_mean(self):
        p = GpdParams(1.0, 0.15)
        y = gpd_sample(p, np.random.default_rng(11), size=20000)
        se = y.std() / np.sqrt(y.size)
        assert abs(y.mean() - 1.0 / 0.85) < 3 * se

    @pytest.mark.parametrize("xi", [-0.2, 0.0, 0.3])
    def test_sample_matches_cdf(self, xi):
        p = GpdParams(1.4, xi)
        y = gpd_sample(p, np.random.default_rng(13), size=100_000)
        result = stats.kstest(y, lambda z: gpd_cdf(z, p))
        assert result.pvalue > 1e-3


class TestExceedances:
    def test_upper_percentile_on_ramp(self):
        series = RawSeries(np.arange(1, 101, dtype=float), np.arange(1, 101, dtype=float))
        events = extract_exceedances(series, ThresholdSpec("upper", 95))
        assert events.threshold == pytest.approx(np.percentile(np.arange(1, 101), 95))
        assert events.n_events == 5
        assert np.all(events.excesses > 0)
        np.testing.assert_allclose(events.original_values(), [96, 97, 98, 99, 100])

    def test_lower_tail_negates(self):
        series = RawSeries(np.arange(10, dtype=float), np.array([5, 4, -3, 2, 1, -6, 0, 3, 2, 1], dtype=float))
        events = extract_exceedances(series, ThresholdSpec.parse("absolute-lower:2"))
        np.testing.assert_allclose(events.times, [2.0, 5.0])
        np.testing.assert_allclose(events.excesses, [1.0, 4.0])
        np.testing.assert_allclose(events.original_values(), [-3.0, -6.0])

    def test_empty_result_is_valid(self):
        series = RawSeries([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        events = extract_exceedances(series, ThresholdSpec("absolute", 10.0))
        assert events.n_events == 0
        assert events.window_end == 2.0

    def test_non_increasing_times_rejected(self):
        with pytest.raises(DataError):
            RawSeries([0.0, 2.0, 1.0], [1.0, 2.0, 3.0])

    def test_threshold_parse(self):
        assert ThresholdSpec.parse("lower:5").negate
        assert ThresholdSpec.parse("upper:99").level == 99.0
        with pytest.raises(ParameterError):
            ThresholdSpec.parse("upper")
        with pytest.raises(ParameterError):
            ThresholdSpec.parse("upper:120")

    def test_events_outside_window_rejected(self):
        with pytest.raises(DataError):
            MarkedEventSeries(window_end=1.0, threshold=0.0, times=[0.5, 2.0], excesses=[1.0, 1.0])


class TestScaleFactor:
    def _series(self, excesses):
        return MarkedEventSeries(
            window_end=10.0, threshold=0.0, times=np.arange(len(excesses), dtype=float), excesses=excesses
        )

    def test_median_policy(self):
        out = set_scale_factor(self._series([1.0, 2.0, 3.0]), "median")
        assert out.scale_factor == 2.0
        np.testing.assert_allclose(out.scaled_excesses, [0.5, 1.0, 1.5])

    def test_explicit_policy(self):
        assert set_scale_factor(self._series([1.0]), 4.0).scale_factor == 4.0
        with pytest.raises(ParameterError):
            set_scale_factor(self._series([1.0]), -1.0)

    def test_empty_training_excesses(self):
        with pytest.raises(DataError):
            set_scale_factor(self._series([]), "median")

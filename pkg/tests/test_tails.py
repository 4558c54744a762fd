"""Outlier detection, Pareto tail fitting and rank-preserving replacement."""

import numpy as np
import pytest

from svyineq import (
    MeasureSpec,
    TailError,
    WeightedSample,
    detect_outliers,
    fit_pareto_tail,
    ht_estimate,
    treat_sample,
    treat_tails,
)
from svyineq.tails import OutlierFlags, TailFit, hill_shape, weighted_quantile

from conftest import plain_sample


def outlier_fixture(seed=42, n_clean=999, factor=100.0):
    rng = np.random.default_rng(seed)
    clean = rng.lognormal(9.64, 0.43, n_clean)
    outlier = factor * np.quantile(clean, 0.99)
    y = np.concatenate([clean, [outlier]])
    return clean, y


class TestDetectOutliers:
    def test_small_samples_return_no_flags_with_warning(self):
        with pytest.warns(UserWarning, match="skipped"):
            flags = detect_outliers(np.arange(1.0, 11.0))
        assert not flags.flags.any()

    def test_constant_data_raises(self):
        with pytest.raises(TailError, match="spread"):
            detect_outliers(np.full(50, 3.0))

    def test_null_flag_rate_on_normal_sample(self):
        x = np.random.default_rng(3).normal(size=1000)
        flags = detect_outliers(x)
        assert flags.flags.mean() <= 0.01

    def test_planted_extreme_value_is_flagged(self):
        _, y = outlier_fixture()
        flags = detect_outliers(y)
        assert flags.flags[-1]

    def test_flags_lie_outside_fences(self):
        _, y = outlier_fixture()
        flags = detect_outliers(y)
        outside = (y < flags.lower_fence) | (y > flags.upper_fence)
        assert np.array_equal(flags.flags, outside)

    def test_scale_equivariance_of_fences(self):
        _, y = outlier_fixture()
        base = detect_outliers(y)
        scaled = detect_outliers(y * 3.0)
        assert scaled.upper_fence == pytest.approx(base.upper_fence * 3.0, rel=1e-9)
        assert scaled.lower_fence == pytest.approx(base.lower_fence * 3.0, rel=1e-9)
        assert np.array_equal(scaled.flags, base.flags)


class TestParetoTailFit:
    def test_recovers_shape_two(self):
        rng = np.random.default_rng(7)
        u0 = 5.0
        exceed = u0 * (1 + rng.pareto(2.0, 1000))
        data = np.concatenate([rng.uniform(1, u0, 2000), exceed])
        fit = fit_pareto_tail(data, u0, "upper")
        assert fit.k == 1000
        assert 1.85 <= fit.shape <= 2.15

    def test_hill_cross_check(self):
        rng = np.random.default_rng(7)
        u0 = 5.0
        data = np.concatenate(
            [rng.uniform(1, u0, 2000), u0 * (1 + rng.pareto(2.0, 1000))]
        )
        fit = fit_pareto_tail(data, u0, "upper")
        assert abs(fit.shape - hill_shape(data, u0)) <= 0.2

    def test_degenerate_exceedances_raise(self):
        data = np.concatenate([np.linspace(1, 5, 50), np.full(20, 9.0)])
        with pytest.raises(TailError, match="degenerate"):
            fit_pareto_tail(data, 6.0, "upper")

    def test_too_few_exceedances(self):
        data = np.linspace(1.0, 10.0, 100)
        with pytest.raises(TailError, match="insufficient"):
            fit_pareto_tail(data, 9.95, "upper")

    def test_threshold_must_be_interior(self):
        data = np.linspace(1.0, 10.0, 100)
        with pytest.raises(TailError, match="inside"):
            fit_pareto_tail(data, 11.0, "upper")

    def test_lower_tail_inverse_recovery(self):
        # Y = l0 / Z with Z Pareto(2.5): power-function lower tail
        rng = np.random.default_rng(11)
        l0 = 2.0
        below = l0 / (1 + rng.pareto(2.5, 1500))
        data = np.concatenate([below, rng.uniform(l0, 10.0, 1500)])
        fit = fit_pareto_tail(data, l0, "lower")
        assert fit.tail == "lower"
        assert 2.3 <= fit.shape <= 2.7


class TestTreatTails:
    def test_no_flags_is_identity(self, rng):
        y = rng.lognormal(0, 0.5, 40)
        sample = plain_sample(y)
        flags = OutlierFlags(np.zeros(40, bool), -np.inf, np.inf)
        treated = treat_tails(sample, flags)
        assert np.array_equal(treated.incomes, y)

    def test_rank_preservation(self):
        _, y = outlier_fixture()
        sample = plain_sample(y)
        treated, _ = treat_sample(sample)
        order_before = np.argsort(y, kind="stable")
        assert np.all(np.diff(treated.incomes[order_before]) >= 0)

    def test_weights_labels_and_order_untouched(self):
        _, y = outlier_fixture()
        sample = WeightedSample(
            y, np.linspace(1, 2, y.size),
            household_ids=[f"h{i}" for i in range(y.size)],
        )
        treated, _ = treat_sample(sample)
        assert treated.n == sample.n
        assert treated.n_prime == sample.n_prime
        assert np.array_equal(treated.weights, sample.weights)
        assert np.array_equal(treated.household_ids, sample.household_ids)
        unflagged = y < np.quantile(y, 0.9)
        assert np.array_equal(treated.incomes[unflagged], y[unflagged])

    def test_upper_treatment_reduces_gini(self):
        _, y = outlier_fixture()
        sample = plain_sample(y)
        treated, report = treat_sample(sample)
        assert report.n_replaced_upper >= 1
        gini = MeasureSpec("gini")
        assert (
            ht_estimate(treated, gini).theta <= ht_estimate(sample, gini).theta
        )

    def test_idempotence_on_fixture(self):
        _, y = outlier_fixture()
        treated, _ = treat_sample(plain_sample(y))
        treated2, report2 = treat_sample(treated)
        assert np.array_equal(treated2.incomes, treated.incomes)
        assert report2.n_replaced_upper + report2.n_replaced_lower == 0

    def test_missing_fit_for_flagged_side(self):
        _, y = outlier_fixture()
        sample = plain_sample(y)
        flags = detect_outliers(y)
        with pytest.raises(TailError, match="no upper tail fit"):
            treat_tails(sample, flags, upper=None)

    def test_scale_equivariance_of_treatment(self):
        _, y = outlier_fixture()
        treated, _ = treat_sample(plain_sample(y))
        treated_scaled, _ = treat_sample(plain_sample(y * 7.0))
        assert np.allclose(treated_scaled.incomes, treated.incomes * 7.0, rtol=1e-9)

    def test_small_sample_treatment_is_noop(self, rng):
        y = rng.lognormal(0, 0.5, 15)
        with pytest.warns(UserWarning):
            treated, report = treat_sample(plain_sample(y))
        assert np.array_equal(treated.incomes, y)
        assert report.upper_fit is None


class TestWeightedQuantile:
    def test_equal_weights_match_interpolated_quantile(self, rng):
        y = rng.lognormal(0, 1, 201)
        got = weighted_quantile(y, np.ones(201), 0.5)
        assert got == pytest.approx(np.median(y), rel=1e-9)

    def test_weight_concentration_moves_quantile(self):
        y = np.array([1.0, 2.0, 100.0])
        w = np.array([1.0, 1.0, 50.0])
        # >96% of the weight sits on 100, so the interpolated median is pulled
        # nearly all the way there and the upper tail saturates exactly
        assert weighted_quantile(y, w, 0.5) > 90.0
        assert weighted_quantile(y, w, 0.9) == pytest.approx(100.0)

"""Household bootstrap, raking calibration and replicate variance."""

import numpy as np
import pytest

from svyineq import (
    BootstrapError,
    CalibrationError,
    CalibrationSpec,
    MeasureSpec,
    WeightedSample,
    bootstrap_resample,
    bootstrap_variance,
    calibrate,
)

from conftest import plain_sample, wr_sample


def household_sample(n_households=20, persons=2, seed=0):
    rng = np.random.default_rng(seed)
    incomes, weights, hh, gender = [], [], [], []
    for h in range(n_households):
        income = float(rng.lognormal(1.0, 0.5))
        weight = float(rng.uniform(50, 150))
        for p in range(persons):
            incomes.append(income)
            weights.append(weight)
            hh.append(f"h{h}")
            gender.append("f" if (h + p) % 2 == 0 else "m")
    return WeightedSample(
        incomes, weights, household_ids=hh,
        aux={"gender": np.array(gender, dtype=object)},
    )


class TestBootstrapResample:
    def test_deterministic_under_seed(self):
        sample = household_sample()
        macro = ["m"] * sample.n
        a = bootstrap_resample(sample, macro, 60, seed=9)
        b = bootstrap_resample(sample, macro, 60, seed=9)
        assert np.array_equal(a.weights, b.weights)

    def test_multiplicity_mean_close_to_one(self):
        sample = household_sample()
        macro = ["m"] * sample.n
        b = 400
        reps = bootstrap_resample(sample, macro, b, seed=3)
        mult = reps.weights / sample.weights[np.newaxis, :]
        col_means = mult.mean(axis=0)
        assert np.all(np.abs(col_means - 1.0) <= 3.0 / np.sqrt(b))

    def test_two_household_patterns(self):
        sample = plain_sample([1.0, 2.0], household_ids=["a", "b"])
        reps = bootstrap_resample(sample, ["m", "m"], 3000, seed=5)
        counts = {(0.0, 2.0): 0, (1.0, 1.0): 0, (2.0, 0.0): 0}
        for row in reps.weights:
            counts[tuple(row)] += 1
        freq = {k: v / 3000 for k, v in counts.items()}
        assert freq[(1.0, 1.0)] == pytest.approx(0.5, abs=0.05)
        assert freq[(0.0, 2.0)] == pytest.approx(0.25, abs=0.04)
        assert freq[(2.0, 0.0)] == pytest.approx(0.25, abs=0.04)

    def test_persons_inherit_household_multiplicity(self):
        sample = household_sample(persons=3)
        reps = bootstrap_resample(sample, ["m"] * sample.n, 50, seed=1)
        mult = reps.weights / sample.weights[np.newaxis, :]
        hh = np.asarray(sample.household_ids)
        for row in mult:
            for label in np.unique(hh):
                members = row[hh == label]
                assert np.all(members == members[0])

    def test_minimum_replicates_enforced(self):
        sample = household_sample()
        with pytest.raises(BootstrapError, match="at least 50"):
            bootstrap_resample(sample, ["m"] * sample.n, 10, seed=1)

    def test_single_household_stratum_rejected(self):
        sample = plain_sample([1.0, 2.0], household_ids=["a", "a"])
        with pytest.raises(BootstrapError, match="single household"):
            bootstrap_resample(sample, ["m", "m"], 50, seed=1)

    def test_macro_strata_respected(self):
        # households never cross macro-strata: each stratum total weight
        # stays positive in every replicate because m_h draws occur within it
        sample = household_sample(n_households=10)
        macro = np.array(["a"] * 10 + ["b"] * 10, dtype=object)
        reps = bootstrap_resample(sample, macro, 80, seed=4)
        for row in reps.weights:
            assert row[:10].sum() > 0
            assert row[10:].sum() > 0


class TestCalibrate:
    def test_fixed_point(self):
        sample = household_sample()
        gender = sample.aux["gender"]
        w = sample.weights
        targets = {
            "f": float(w[gender == "f"].sum()),
            "m": float(w[gender == "m"].sum()),
        }
        spec = CalibrationSpec(margins=(("gender", targets),))
        out = calibrate(w, sample, spec)
        assert np.allclose(out, w)

    def test_single_margin_one_pass(self):
        sample = plain_sample(
            [1.0, 2.0], aux={"gender": np.array(["f", "m"], dtype=object)}
        )
        spec = CalibrationSpec(margins=(("gender", {"f": 1.5, "m": 0.5}),))
        out = calibrate([1.0, 1.0], sample, spec)
        assert np.allclose(out, [1.5, 0.5])

    def test_two_by_two_ipf(self):
        aux = {
            "g": np.array(["f", "f", "m", "m"], dtype=object),
            "a": np.array(["y", "o", "y", "o"], dtype=object),
        }
        sample = plain_sample([1.0, 1.0, 1.0, 1.0], aux=aux)
        spec = CalibrationSpec(
            margins=(("g", {"f": 3.0, "m": 1.0}), ("a", {"y": 2.5, "o": 1.5}))
        )
        w = calibrate(np.ones(4), sample, spec)
        assert w[0] + w[1] == pytest.approx(3.0, rel=1e-6)
        assert w[2] + w[3] == pytest.approx(1.0, rel=1e-6)
        assert w[0] + w[2] == pytest.approx(2.5, rel=1e-6)
        assert w[1] + w[3] == pytest.approx(1.5, rel=1e-6)

    def test_empty_category_raises(self):
        sample = plain_sample(
            [1.0, 2.0], aux={"gender": np.array(["f", "f"], dtype=object)}
        )
        spec = CalibrationSpec(margins=(("gender", {"f": 1.0, "m": 1.0}),))
        with pytest.raises(CalibrationError, match="empty"):
            calibrate([1.0, 1.0], sample, spec)

    def test_nonpositive_targets_rejected(self):
        with pytest.raises(CalibrationError):
            CalibrationSpec(margins=(("gender", {"f": 0.0}),))

    def test_uncovered_observation_rejected(self):
        sample = plain_sample(
            [1.0, 2.0], aux={"gender": np.array(["f", "x"], dtype=object)}
        )
        spec = CalibrationSpec(margins=(("gender", {"f": 1.0}),))
        with pytest.raises(CalibrationError, match="cover"):
            calibrate([1.0, 1.0], sample, spec)

    def test_replicates_are_calibrated(self):
        sample = household_sample()
        gender = sample.aux["gender"]
        base = sample.weights
        targets = {
            "f": float(base[gender == "f"].sum()),
            "m": float(base[gender == "m"].sum()),
        }
        spec = CalibrationSpec(margins=(("gender", targets),))
        reps = bootstrap_resample(
            sample, ["m"] * sample.n, 60, seed=2, calibration=spec
        )
        for row in reps.weights:
            for cat, target in targets.items():
                got = row[gender == cat].sum()
                assert got == pytest.approx(target, rel=1e-5)


class TestBootstrapVariance:
    def test_constant_incomes_zero_variance(self):
        sample = plain_sample([2.0] * 12, household_ids=[f"h{i}" for i in range(12)])
        reps = bootstrap_resample(sample, ["m"] * 12, 50, seed=8)
        _, frame = wr_sample(sample.incomes, sample.weights)
        result = bootstrap_variance(sample, frame, MeasureSpec("gini"), reps)
        assert result.variance == pytest.approx(0.0, abs=1e-20)

    def test_mean_variance_close_to_srswr_oracle(self, rng):
        # weighted mean under one macro-stratum vs the with-replacement
        # analytic variance s^2/n (weights equal)
        n, b = 50, 2000
        y = rng.lognormal(1.0, 0.6, n)
        sample, frame = wr_sample(y, np.ones(n))
        reps = bootstrap_resample(sample, ["m"] * n, b, seed=17)
        mus = (reps.weights @ y) / reps.weights.sum(axis=1)
        boot_var = np.var(mus, ddof=1)
        analytic = np.var(y, ddof=0) / n  # with-replacement variance of the mean
        assert abs(boot_var / analytic - 1.0) < 0.25

    def test_reproducible_results(self):
        sample = household_sample()
        _, frame = wr_sample(sample.incomes, sample.weights)
        reps = bootstrap_resample(sample, ["m"] * sample.n, 60, seed=21)
        r1 = bootstrap_variance(sample, frame, MeasureSpec("gini"), reps)
        r2 = bootstrap_variance(sample, frame, MeasureSpec("gini"), reps)
        assert np.array_equal(r1.replicate_estimates, r2.replicate_estimates)
        assert r1.variance == r2.variance

    def test_summary_matches_replicate_column(self):
        sample = household_sample()
        _, frame = wr_sample(sample.incomes, sample.weights)
        reps = bootstrap_resample(sample, ["m"] * sample.n, 80, seed=22)
        result = bootstrap_variance(sample, frame, MeasureSpec("ge", 0.0), reps)
        assert result.variance == pytest.approx(
            np.var(result.replicate_estimates, ddof=1), rel=1e-12
        )
        assert result.cv_of_estimator == pytest.approx(
            result.sd / result.point_estimate, rel=1e-12
        )
        assert result.variance >= 0.0 and result.cv_of_estimator >= 0.0

"""Linearized variables: closed forms, weight derivatives, Gini special case."""

import math

import numpy as np
import pytest

from svyineq import EstimationError, MeasureSpec, linearize_gamma, linearize_numeric
from svyineq.linearize import ANALYTIC, NUMERIC, gini_gamma_functional
from svyineq.measures import gini_gamma_hat

from conftest import plain_sample

ANALYTIC_SPECS = [
    MeasureSpec("cv"),
    MeasureSpec("ge", 0.0),
    MeasureSpec("ge", 1.0),
    MeasureSpec("ge", 2.0),
    MeasureSpec("atkinson", 0.5),
    MeasureSpec("atkinson", 1.0),
    MeasureSpec("atkinson", 2.0),
]


class TestClosedForms:
    def test_ge0_at_e_is_one(self):
        sample = plain_sample([math.e, math.e**2])
        z = linearize_gamma(sample, MeasureSpec("ge", 0.0)).z
        assert z[0] == pytest.approx(1.0, rel=1e-12)

    def test_ge2_squares(self):
        sample = plain_sample([1.0, 3.0])
        z = linearize_gamma(sample, MeasureSpec("ge", 2.0))
        assert z.kind == ANALYTIC
        assert np.allclose(z.z, [1.0, 9.0])

    def test_atkinson_half_square_root(self):
        sample = plain_sample([4.0, 9.0])
        z = linearize_gamma(sample, MeasureSpec("atkinson", 0.5)).z
        assert np.allclose(z, [2.0, 3.0])

    def test_cv_squares(self):
        sample = plain_sample([2.0, 5.0])
        assert np.allclose(linearize_gamma(sample, MeasureSpec("cv")).z, [4.0, 25.0])

    def test_atkinson_one_is_log(self):
        sample = plain_sample([1.0, math.e])
        assert np.allclose(
            linearize_gamma(sample, MeasureSpec("atkinson", 1.0)).z, [0.0, 1.0]
        )


class TestNumericDerivative:
    def test_weighted_mean_of_squares(self, random_weighted_sample):
        sample = random_weighted_sample(seed=3)
        y2 = sample.incomes**2
        z = linearize_numeric(sample, lambda wt: float(np.dot(wt, y2)))
        assert np.max(np.abs(z - y2) / np.abs(y2)) < 1e-6

    def test_mean_functional_gives_incomes(self, random_weighted_sample):
        sample = random_weighted_sample(seed=4)
        y = sample.incomes
        z = linearize_numeric(sample, lambda wt: float(np.dot(wt, y)))
        assert np.max(np.abs(z - y) / np.abs(y)) < 1e-6

    def test_constant_functional_is_zero(self, random_weighted_sample):
        sample = random_weighted_sample(seed=5)
        z = linearize_numeric(sample, lambda wt: 42.0)
        assert np.all(z == 0.0)

    def test_non_finite_evaluation_names_unit(self, random_weighted_sample):
        sample = random_weighted_sample(seed=6)

        def bad(wt):
            return float("nan") if wt[3] != sample.normalized_weights()[3] else 1.0

        with pytest.raises(EstimationError, match="unit 3"):
            linearize_numeric(sample, bad)


class TestAgreement:
    def test_analytic_vs_numeric_on_random_samples(self, random_weighted_sample):
        for seed in range(10):
            sample = random_weighted_sample(n=30, seed=seed)
            for spec in ANALYTIC_SPECS:
                analytic = linearize_gamma(sample, spec)
                assert analytic.kind == ANALYTIC
                from svyineq.measures import gamma_transform

                g = gamma_transform(spec, sample.incomes)
                numeric = linearize_numeric(
                    sample, lambda wt, g=g: float(np.dot(wt, g))
                )
                rel = np.abs(numeric - analytic.z) / np.maximum(
                    np.abs(analytic.z), 1e-12
                )
                assert np.max(rel) < 1e-5

    def test_gini_is_numeric(self, random_weighted_sample):
        sample = random_weighted_sample(n=20, seed=11)
        lin = linearize_gamma(sample, MeasureSpec("gini"))
        assert lin.kind == NUMERIC
        assert np.all(np.isfinite(lin.z))

    def test_gini_functional_matches_estimator(self, random_weighted_sample):
        # the perturbation functional evaluated at the observed weights must
        # reproduce gamma_hat itself
        sample = random_weighted_sample(n=15, seed=12)
        functional = gini_gamma_functional(sample)
        got = functional(sample.normalized_weights())
        expected = gini_gamma_hat(sample.incomes, sample.weights)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_gini_linearization_halved_step_stability(self, random_weighted_sample):
        # quadratic functional: central differences are step-size exact
        sample = random_weighted_sample(n=12, seed=13)
        functional = gini_gamma_functional(sample)
        z1 = linearize_numeric(sample, functional)
        wt = sample.normalized_weights()
        z2 = np.empty_like(z1)
        for k in range(sample.n):
            h = 0.5e-6 * max(1.0, wt[k])
            up, down = wt.copy(), wt.copy()
            up[k] += h
            down[k] -= h
            z2[k] = (functional(up) - functional(down)) / (2 * h)
        assert np.allclose(z1, z2, rtol=1e-6)

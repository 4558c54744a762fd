"""Shared fixtures and independent oracle implementations.

The oracles below compute measure values straight from their textbook
definitions (pairwise sums, direct power/log means) without reusing any of
the package's decompositions, so they can arbitrate correctness.
"""

import numpy as np
import pytest

from svyineq import DesignFrame, WeightedSample


# ---------------------------------------------------------------------------
# brute-force population oracles
# ---------------------------------------------------------------------------


def oracle_gini(y):
    """Mean absolute difference over all N^2 pairs, divided by 2 mu."""
    y = np.asarray(y, dtype=float)
    delta = np.mean(np.abs(y[:, None] - y[None, :]))
    return delta / (2.0 * np.mean(y))


def oracle_cv(y):
    y = np.asarray(y, dtype=float)
    return np.sqrt(np.mean((y - np.mean(y)) ** 2)) / np.mean(y)


def oracle_ge(y, alpha):
    y = np.asarray(y, dtype=float)
    mu = np.mean(y)
    if abs(alpha) < 1e-12:
        return float(np.mean(np.log(mu / y)))
    if abs(alpha - 1.0) < 1e-12:
        return float(np.mean(y / mu * np.log(y / mu)))
    return float(np.mean((y / mu) ** alpha - 1.0) / (alpha * (alpha - 1.0)))


def oracle_atkinson(y, eps):
    y = np.asarray(y, dtype=float)
    mu = np.mean(y)
    if abs(eps - 1.0) < 1e-12:
        return float(1.0 - np.exp(np.mean(np.log(y))) / mu)
    return float(1.0 - np.mean(y ** (1.0 - eps)) ** (1.0 / (1.0 - eps)) / mu)


def oracle_unweighted_gini(y):
    """Sen's rank form on sorted values: 2 sum(i y_(i)) / (n sum y) - (n+1)/n."""
    ys = np.sort(np.asarray(y, dtype=float))
    n = ys.size
    ranks = np.arange(1, n + 1)
    return float(2.0 * np.sum(ranks * ys) / (n * np.sum(ys)) - (n + 1.0) / n)


ORACLES = {
    "gini": oracle_gini,
    "cv": oracle_cv,
    "ge": oracle_ge,
    "atkinson": oracle_atkinson,
}


def oracle_value(spec, y):
    fn = ORACLES[spec.family]
    if spec.parameter is None:
        return fn(y)
    return fn(y, spec.parameter)


# ---------------------------------------------------------------------------
# sample and frame builders
# ---------------------------------------------------------------------------


def plain_sample(incomes, weights=None, **kwargs):
    incomes = np.asarray(incomes, dtype=float)
    if weights is None:
        weights = np.ones_like(incomes)
    return WeightedSample(incomes, weights, **kwargs)


def sr_sample(incomes, weights, population_households):
    """Single self-representing stratum, one household per observation."""
    incomes = np.asarray(incomes, dtype=float)
    n = incomes.size
    labels = [f"h{i}" for i in range(n)]
    sample = WeightedSample(
        incomes, weights, household_ids=labels, stratum_ids=["s"] * n,
        psu_ids=labels, sr_flags=[True] * n,
    )
    counts = None if population_households is None else {"s": population_households}
    frame = DesignFrame.from_sample(sample, population_households=counts)
    return sample, frame


def wr_sample(incomes, weights):
    """Single NSR stratum, every observation its own PSU (with-replacement)."""
    incomes = np.asarray(incomes, dtype=float)
    n = incomes.size
    labels = [f"u{i}" for i in range(n)]
    sample = WeightedSample(
        incomes, weights, household_ids=labels, stratum_ids=["s"] * n,
        psu_ids=labels, sr_flags=[False] * n,
    )
    return sample, DesignFrame.from_sample(sample)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def random_weighted_sample(rng):
    def make(n=25, seed=None):
        r = np.random.default_rng(seed) if seed is not None else rng
        incomes = r.lognormal(1.0, 0.6, n)
        weights = r.uniform(0.5, 3.0, n)
        return plain_sample(incomes, weights)

    return make

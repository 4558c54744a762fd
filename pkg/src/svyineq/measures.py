"""Inequality measures: population values and design-weighted plug-in estimators.

Every measure is expressed through the decomposition theta = f(mu, gamma) where
mu is the mean income and gamma is the mean of a measure-specific transform
g(y) (for the Gini index gamma also involves ranks).  Working with the (mu,
gamma) pair is what makes the downstream variance and bias machinery uniform
across measure families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSampleError, DomainError

FAMILIES = ("cv", "gini", "ge", "atkinson")

#: families whose spec takes no parameter
_PARAMETERLESS = ("cv", "gini")


@dataclass(frozen=True)
class MeasureSpec:
    """A measure family plus its parameter (alpha for GE, epsilon for Atkinson).

    Parameters
    ----------
    family : str
        One of ``cv``, ``gini``, ``ge``, ``atkinson``.
    parameter : float, optional
        Required for ``ge`` (any real alpha) and ``atkinson`` (epsilon >= 0);
        rejected for ``cv`` and ``gini``.
    """

    family: str
    parameter: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown measure family {self.family!r}")
        if self.family in _PARAMETERLESS:
            if self.parameter is not None:
                raise DomainError(f"{self.family} takes no parameter")
        else:
            if self.parameter is None:
                raise DomainError(f"{self.family} requires a parameter")
            p = float(self.parameter)
            if not math.isfinite(p):
                raise DomainError("measure parameter must be finite")
            if self.family == "atkinson" and p < 0:
                raise DomainError("atkinson requires epsilon >= 0")
            object.__setattr__(self, "parameter", p)

    @classmethod
    def parse(cls, text: str) -> "MeasureSpec":
        """Parse compact spec strings: ``gini``, ``cv``, ``ge:ALPHA``, ``atkinson:EPS``."""
        parts = text.strip().lower().split(":")
        family = parts[0]
        if len(parts) == 1:
            return cls(family)
        if len(parts) == 2:
            try:
                return cls(family, float(parts[1]))
            except ValueError as exc:
                raise DomainError(f"bad measure parameter in {text!r}") from exc
        raise DomainError(f"cannot parse measure spec {text!r}")

    def label(self) -> str:
        """Canonical string form, suitable for report columns."""
        if self.family in _PARAMETERLESS:
            return self.family
        return f"{self.family}:{self.parameter:g}"


@dataclass(frozen=True)
class ThetaDecomposition:
    """A measure value together with its (mu, gamma) decomposition."""

    mu: float
    gamma: float
    theta: float


@dataclass(frozen=True)
class IncomePopulation:
    """A finite population of strictly positive incomes."""

    incomes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.incomes, dtype=float)
        if arr.ndim != 1:
            raise DomainError("incomes must be a 1-d vector")
        if arr.size == 0:
            raise DomainError("empty population")
        if not np.all(np.isfinite(arr)):
            raise DomainError("incomes must be finite")
        if np.any(arr <= 0):
            raise DomainError("all incomes must be strictly positive")
        object.__setattr__(self, "incomes", arr)

    @property
    def size(self) -> int:
        return int(self.incomes.size)


@dataclass(frozen=True)
class WeightedObservation:
    """One sampled unit: income, design weight and design labels."""

    income: float
    weight: float
    household_id: str = ""
    stratum_id: str = ""
    psu_id: str = ""
    sr_flag: bool = False


class WeightedSample:
    """A design-weighted sample of incomes with design labels.

    Incomes must be strictly positive and weights non-negative.  ``n_prime``
    counts the observations with strictly positive weight; it is the effective
    sample size used by the finite-sample adjustment factors.
    """

    def __init__(
        self,
        incomes,
        weights,
        household_ids=None,
        stratum_ids=None,
        psu_ids=None,
        sr_flags=None,
        aux: dict | None = None,
    ):
        incomes = np.asarray(incomes, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if incomes.ndim != 1 or weights.shape != incomes.shape:
            raise DomainError("incomes and weights must be equal-length vectors")
        if incomes.size == 0:
            raise DomainError("empty sample")
        if not (np.all(np.isfinite(incomes)) and np.all(np.isfinite(weights))):
            raise DomainError("incomes and weights must be finite")
        if np.any(incomes <= 0):
            raise DomainError("all incomes must be strictly positive")
        if np.any(weights < 0):
            raise DomainError("weights must be non-negative")
        n = incomes.size
        self.incomes = incomes
        self.weights = weights
        self.household_ids = self._labels(household_ids, [str(i) for i in range(n)], n)
        self.stratum_ids = self._labels(stratum_ids, "0", n)
        self.psu_ids = self._labels(psu_ids, self.household_ids, n)
        if sr_flags is None:
            sr_flags = np.zeros(n, dtype=bool)
        self.sr_flags = np.asarray(sr_flags, dtype=bool)
        if self.sr_flags.shape != (n,):
            raise DomainError("sr_flags must align with the sample")
        self.aux = {k: np.asarray(v) for k, v in (aux or {}).items()}
        for key, col in self.aux.items():
            if col.shape != (n,):
                raise DomainError(f"auxiliary column {key!r} must align with the sample")

    @staticmethod
    def _labels(values, default, n):
        if values is None:
            values = [default] * n if isinstance(default, str) else default
        arr = np.asarray(values, dtype=object)
        if arr.shape != (n,):
            raise DomainError("label column must align with the sample")
        return arr

    @classmethod
    def from_observations(cls, observations) -> "WeightedSample":
        obs = list(observations)
        return cls(
            incomes=[o.income for o in obs],
            weights=[o.weight for o in obs],
            household_ids=[o.household_id for o in obs],
            stratum_ids=[o.stratum_id for o in obs],
            psu_ids=[o.psu_id for o in obs],
            sr_flags=[o.sr_flag for o in obs],
        )

    @property
    def n(self) -> int:
        return int(self.incomes.size)

    @property
    def n_prime(self) -> int:
        """Number of observations carrying strictly positive weight."""
        return int(np.count_nonzero(self.weights > 0))

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def normalized_weights(self) -> np.ndarray:
        total = self.total_weight
        if total <= 0:
            raise DomainError("total weight must be positive")
        return self.weights / total

    def replace_weights(self, weights) -> "WeightedSample":
        """Same sample with a new weight vector (labels and incomes shared)."""
        return WeightedSample(
            self.incomes, weights, self.household_ids, self.stratum_ids,
            self.psu_ids, self.sr_flags, self.aux,
        )

    def replace_incomes(self, incomes) -> "WeightedSample":
        """Same sample with a new income vector (weights and labels shared)."""
        return WeightedSample(
            incomes, self.weights, self.household_ids, self.stratum_ids,
            self.psu_ids, self.sr_flags, self.aux,
        )


# ---------------------------------------------------------------------------
# transforms g(y) shared by the estimators and the linearization
# ---------------------------------------------------------------------------

_GE_EPS = 1e-9  # |alpha| or |alpha-1| below this routes to the closed form


def ge_alpha_kind(alpha: float) -> str:
    """Classify a GE parameter: 'zero', 'one' or 'general'."""
    if abs(alpha) < _GE_EPS:
        return "zero"
    if abs(alpha - 1.0) < _GE_EPS:
        return "one"
    return "general"


def gamma_transform(spec: MeasureSpec, y: np.ndarray) -> np.ndarray:
    """The per-unit transform g(y) whose weighted mean is gamma.

    Not defined for the Gini index, whose gamma involves estimated ranks.
    """
    if spec.family == "cv":
        return y * y
    if spec.family == "ge":
        kind = ge_alpha_kind(spec.parameter)
        if kind == "zero":
            return np.log(y)
        if kind == "one":
            return y * np.log(y)
        return y ** spec.parameter
    if spec.family == "atkinson":
        if abs(spec.parameter - 1.0) < _GE_EPS:
            return np.log(y)
        return y ** (1.0 - spec.parameter)
    raise DomainError(f"no closed-form transform for {spec.family}")


def theta_from_components(
    spec: MeasureSpec, mu: float, gamma: float, n_prime: int | None = None
) -> float:
    """Evaluate theta = f(mu, gamma), with the finite-sample factor when n_prime given.

    ``n_prime=None`` evaluates the population form.  With ``n_prime`` the CV
    carries sqrt(n'/(n'-1)) and GE(alpha not in {0,1}) carries n'/(n'-1),
    matching the weighted plug-in estimators.
    """
    if mu <= 0:
        raise DomainError("mean must be positive")
    family = spec.family
    if family == "cv":
        inner = gamma - mu * mu
        if inner < 0:
            inner = 0.0  # rounding guard: gamma >= mu^2 by Jensen
        value = math.sqrt(inner) / mu
        if n_prime is not None:
            value *= math.sqrt(n_prime / (n_prime - 1.0))
        return value
    if family == "gini":
        return 2.0 * gamma / mu - 1.0
    if family == "ge":
        kind = ge_alpha_kind(spec.parameter)
        if kind == "zero":
            return math.log(mu) - gamma
        if kind == "one":
            return gamma / mu - math.log(mu)
        alpha = spec.parameter
        value = (gamma / mu**alpha - 1.0) / (alpha * (alpha - 1.0))
        if n_prime is not None:
            value *= n_prime / (n_prime - 1.0)
        return value
    if family == "atkinson":
        eps = spec.parameter
        if abs(eps - 1.0) < _GE_EPS:
            return 1.0 - math.exp(gamma) / mu
        if gamma <= 0:
            raise DomainError("atkinson gamma component must be positive")
        return 1.0 - gamma ** (1.0 / (1.0 - eps)) / mu
    raise DomainError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# population values
# ---------------------------------------------------------------------------


def _population_gini_gamma(y: np.ndarray) -> float:
    """gamma = mean over units of y * (midrank - 1/2) / N."""
    from scipy.stats import rankdata

    ranks = rankdata(y, method="average")
    n = y.size
    return float(np.mean(y * (ranks - 0.5)) / n)


def population_value(pop: IncomePopulation, spec: MeasureSpec) -> ThetaDecomposition:
    """Exact finite-population value of a measure with its (mu, gamma) pieces.

    Parameters
    ----------
    pop : IncomePopulation
    spec : MeasureSpec

    Returns
    -------
    ThetaDecomposition
        ``theta`` is the population value; ``mu`` and ``gamma`` are the
        components it factors through.

    Raises
    ------
    DegenerateSampleError
        If the population has fewer than two units.
    """
    y = pop.incomes
    if y.size < 2:
        raise DegenerateSampleError("population must contain at least 2 units")
    mu = float(np.mean(y))
    if spec.family == "gini":
        gamma = _population_gini_gamma(y)
    else:
        gamma = float(np.mean(gamma_transform(spec, y)))
    if spec.family == "cv":
        # central form of sqrt(gamma - mu^2): avoids cancellation near equality
        theta = math.sqrt(float(np.mean((y - mu) ** 2))) / mu
    else:
        theta = theta_from_components(spec, mu, gamma)
    return ThetaDecomposition(mu=mu, gamma=gamma, theta=theta)


# ---------------------------------------------------------------------------
# design-weighted estimators
# ---------------------------------------------------------------------------


def gini_rank_order(incomes: np.ndarray) -> np.ndarray:
    """Sample rank order for the Gini estimator: by income, ties by input position."""
    return np.argsort(incomes, kind="stable")


def gini_gamma_hat(incomes: np.ndarray, weights: np.ndarray) -> float:
    """Weighted Gini gamma component: sum_i w_i y_i (Nhat_i - w_i/2) / Nhat^2.

    Nhat_i accumulates the weight of every unit ranking at or below unit i,
    with ties broken by stable input order.
    """
    order = gini_rank_order(incomes)
    w = weights[order]
    y = incomes[order]
    nhat_i = np.cumsum(w)
    nhat = nhat_i[-1]
    if nhat <= 0:
        raise DomainError("total weight must be positive")
    return float(np.sum(w * y * (nhat_i - w / 2.0)) / nhat**2)


def ht_estimate(sample: WeightedSample, spec: MeasureSpec) -> ThetaDecomposition:
    """Design-weighted plug-in estimate of a measure.

    Uses the ratio form mu_hat = sum(w y) / sum(w) and the measure-specific
    gamma_hat; includes the finite-sample factors sqrt(n'/(n'-1)) for the CV
    and n'/(n'-1) for GE with alpha outside {0, 1}.

    Raises
    ------
    DegenerateSampleError
        If fewer than two observations carry positive weight.
    DomainError
        If the total weight is not positive.
    """
    n_prime = sample.n_prime
    if n_prime < 2:
        raise DegenerateSampleError(
            f"need at least 2 positive-weight observations, got {n_prime}"
        )
    wt = sample.normalized_weights()
    y = sample.incomes
    mu = float(np.dot(wt, y))
    if spec.family == "gini":
        gamma = gini_gamma_hat(y, sample.weights)
    else:
        gamma = float(np.dot(wt, gamma_transform(spec, y)))
    if spec.family == "cv":
        # central form of sqrt(gamma - mu^2): avoids cancellation near equality
        spread = math.sqrt(float(np.dot(wt, (y - mu) ** 2)))
        theta = math.sqrt(n_prime / (n_prime - 1.0)) * spread / mu
    else:
        theta = theta_from_components(spec, mu, gamma, n_prime=n_prime)
    return ThetaDecomposition(mu=mu, gamma=gamma, theta=theta)


# ---------------------------------------------------------------------------
# family transforms
# ---------------------------------------------------------------------------


def atkinson_from_ge(ge_value: float, epsilon: float) -> float:
    """Map a GE(1 - epsilon) value to the Atkinson index A(epsilon).

    A(eps) = 1 - [eps (eps - 1) GE(1 - eps) + 1]^{1/(1 - eps)}; undefined at
    epsilon = 1.
    """
    if abs(epsilon - 1.0) < _GE_EPS:
        raise DomainError("epsilon = 1 is not supported by this transform")
    base = epsilon * (epsilon - 1.0) * ge_value + 1.0
    if base <= 0:
        raise DomainError("transform base must be positive")
    return 1.0 - base ** (1.0 / (1.0 - epsilon))


def relative_entropy_transform(ge_value: float, alpha: float, pop_size: int) -> float:
    """Rescale GE(1) or GE(2) by its population maximum onto [0, 1].

    The maximum is log N for alpha = 1 and (N - 1)/2 for alpha = 2, where N is
    the true population size.
    """
    if pop_size < 2:
        raise DomainError("population size must be at least 2")
    if abs(alpha - 1.0) < _GE_EPS:
        return ge_value / math.log(pop_size)
    if abs(alpha - 2.0) < _GE_EPS:
        return ge_value / ((pop_size - 1.0) / 2.0)
    raise DomainError("relative entropy is defined for alpha in {1, 2} only")

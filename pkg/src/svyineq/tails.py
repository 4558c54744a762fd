"""Extreme-value detection and semi-parametric tail replacement.

Outliers are detected with a generalized boxplot: the data's rank scores are
mapped to normal quantiles, a Tukey g-and-h shape is fitted by quantile
matching, and the fences are the fitted quantiles at extreme levels.  Flagged
values are replaced by quantiles of a Pareto model fitted to the upper tail
(or of its inverse-Pareto counterpart for the lower tail), with the shape
estimated by the probability-integral-transform moment condition
mean((u0 / y)^shape) = 1/2 on the exceedances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import TailError
from .measures import WeightedSample

UPPER = "upper"
LOWER = "lower"

#: minimum exceedance count for a tail fit
K_MIN = 10

#: default fence levels of the generalized boxplot
Q_LOW = 0.0015
Q_HIGH = 0.9985

#: quantile levels used for the spread regression of the g-and-h fit
_SPREAD_GRID = (0.05, 0.10, 0.15, 0.20, 0.25)

#: octile level used for the closed-form skewness coefficient
_G_LEVEL = 0.125


@dataclass(frozen=True)
class TailFit:
    """A fitted Pareto-type tail: side, threshold, shape and exceedance count."""

    tail: str
    threshold: float
    shape: float
    k: int

    def __post_init__(self):
        if self.tail not in (UPPER, LOWER):
            raise TailError(f"unknown tail {self.tail!r}")
        if self.shape <= 0:
            raise TailError("tail shape must be positive")


@dataclass(frozen=True)
class OutlierFlags:
    """Boolean flags aligned with a sample plus the fitted fences."""

    flags: np.ndarray
    lower_fence: float
    upper_fence: float


def _tukey_gh_transform(z, g, h):
    """T(z) = (exp(g z) - 1)/g * exp(h z^2 / 2), with the g -> 0 limit."""
    z = np.asarray(z, dtype=float)
    if abs(g) < 1e-8:
        base = z
    else:
        base = np.expm1(g * z) / g
    return base * np.exp(h * z * z / 2.0)


def fit_tukey_gh(values: np.ndarray):
    """Quantile-matching fit of a Tukey g-and-h shape.

    Location is the median; g comes from the octile skewness in closed form;
    h and the scale come from a log-spread regression on a fixed grid of tail
    levels.  Returns (location, scale, g, h).
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    r = (np.arange(1, n + 1) - 0.5) / n
    def q(p):
        return float(np.interp(p, r, x))

    a = q(0.5)
    z_g = norm.ppf(_G_LEVEL)
    upper_half = q(1.0 - _G_LEVEL) - a
    lower_half = a - q(_G_LEVEL)
    if upper_half <= 0 or lower_half <= 0:
        raise TailError("data has no spread around the median")
    g = -np.log(upper_half / lower_half) / z_g

    xs, ys = [], []
    for p in _SPREAD_GRID:
        z_p = norm.ppf(p)
        spread = q(1.0 - p) - q(p)
        if spread <= 0:
            continue
        if abs(g) < 1e-8:
            denom = -2.0 * z_p
        else:
            denom = (np.exp(-g * z_p) - np.exp(g * z_p)) / g
        xs.append(z_p * z_p / 2.0)
        ys.append(np.log(spread / denom))
    if len(xs) < 2:
        raise TailError("data has no spread around the median")
    h, log_b = np.polyfit(xs, ys, 1)
    h = max(float(h), 0.0)
    b = float(np.exp(log_b))
    return a, b, float(g), h


def detect_outliers(
    values,
    q_low: float = Q_LOW,
    q_high: float = Q_HIGH,
    min_n: int = 20,
) -> OutlierFlags:
    """Flag points outside generalized-boxplot fences.

    Below ``min_n`` observations no flags are raised (with a warning); constant
    data is an error because no spread can be fitted.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < min_n:
        warnings.warn(
            f"outlier detection skipped: {n} < {min_n} observations",
            stacklevel=2,
        )
        return OutlierFlags(
            flags=np.zeros(n, dtype=bool),
            lower_fence=-np.inf,
            upper_fence=np.inf,
        )
    if np.all(x == x[0]):
        raise TailError("constant data: no spread to calibrate fences")
    a, b, g, h = fit_tukey_gh(x)
    lower = a + b * float(_tukey_gh_transform(norm.ppf(q_low), g, h))
    upper = a + b * float(_tukey_gh_transform(norm.ppf(q_high), g, h))
    flags = (x < lower) | (x > upper)
    return OutlierFlags(flags=flags, lower_fence=lower, upper_fence=upper)


def _pitse_shape(u: np.ndarray) -> float:
    """Solve mean(u^shape) = 1/2 for shape, u in (0, 1)."""
    if np.all(u == u[0]):
        raise TailError("degenerate exceedances: all values equal")

    def moment_gap(shape):
        return float(np.mean(u**shape)) - 0.5

    lo, hi = 0.1, 50.0
    f_lo, f_hi = moment_gap(lo), moment_gap(hi)
    if f_lo < 0 or f_hi > 0:
        raise TailError("tail-index solve failed: no root in [0.1, 50]")
    return float(brentq(moment_gap, lo, hi, xtol=1e-8, rtol=1e-10))


def fit_pareto_tail(values, threshold: float, tail: str, k_min: int = K_MIN) -> TailFit:
    """Fit a Pareto tail beyond a threshold.

    For the upper tail the exceedances are the values above the threshold and
    the moment condition uses u = threshold / y.  For the lower tail the
    values below the threshold are inverted (z = threshold / y) and the same
    estimator applies, i.e. u = y / threshold.
    """
    x = np.asarray(values, dtype=float)
    if not (x.min() < threshold < x.max()):
        raise TailError("threshold must lie strictly inside the data range")
    if tail == UPPER:
        exceed = x[x > threshold]
        u = threshold / exceed
    elif tail == LOWER:
        exceed = x[x < threshold]
        u = exceed / threshold
    else:
        raise TailError(f"unknown tail {tail!r}")
    k = exceed.size
    if k < k_min:
        raise TailError(
            f"insufficient tail: {k} exceedances beyond {threshold:g}, need {k_min}"
        )
    shape = _pitse_shape(u)
    return TailFit(tail=tail, threshold=float(threshold), shape=shape, k=k)


def hill_shape(values, threshold: float) -> float:
    """Hill tail-index estimate k / sum(log(y_i / threshold)); cross-check oracle."""
    x = np.asarray(values, dtype=float)
    exceed = x[x > threshold]
    if exceed.size == 0:
        raise TailError("no exceedances above the threshold")
    return float(exceed.size / np.sum(np.log(exceed / threshold)))


def _replacements_upper(x: np.ndarray, flags: np.ndarray, fit: TailFit) -> np.ndarray:
    """Rank-preserving Pareto quantiles for flagged values above the threshold."""
    tail_rows = np.flatnonzero(x > fit.threshold)
    if not np.all(x[flags] > fit.threshold):
        raise TailError("an upper-flagged value lies below the fitted threshold")
    k = tail_rows.size
    order = tail_rows[np.argsort(x[tail_rows], kind="stable")]
    new = x.copy()
    for j, row in enumerate(order, start=1):
        if flags[row]:
            p = (j - 0.5) / k
            new[row] = fit.threshold * (1.0 - p) ** (-1.0 / fit.shape)
    return new


def _replacements_lower(x: np.ndarray, flags: np.ndarray, fit: TailFit) -> np.ndarray:
    tail_rows = np.flatnonzero(x < fit.threshold)
    if not np.all(x[flags] < fit.threshold):
        raise TailError("a lower-flagged value lies above the fitted threshold")
    k = tail_rows.size
    order = tail_rows[np.argsort(x[tail_rows], kind="stable")]
    new = x.copy()
    for j, row in enumerate(order, start=1):
        if flags[row]:
            p = (j - 0.5) / k
            new[row] = fit.threshold * p ** (1.0 / fit.shape)
    return new


def treat_tails(
    sample: WeightedSample,
    flags: OutlierFlags,
    upper: TailFit | None = None,
    lower: TailFit | None = None,
) -> WeightedSample:
    """Replace flagged values by fitted-tail quantiles at their rank positions.

    Weights, labels and row order are untouched.  Each side that carries flags
    must come with its fit, and the replacements must preserve the ordering
    against the untreated interior.
    """
    x = sample.incomes
    new = x.copy()
    up_mask = flags.flags & (x > flags.upper_fence)
    low_mask = flags.flags & (x < flags.lower_fence)
    if np.any(up_mask):
        if upper is None:
            raise TailError("upper flags present but no upper tail fit given")
        new = _replacements_upper(new, up_mask, upper)
    if np.any(low_mask):
        if lower is None:
            raise TailError("lower flags present but no lower tail fit given")
        new = _replacements_lower(new, low_mask, lower)
    order = np.argsort(x, kind="stable")
    if np.any(np.diff(new[order]) < 0):
        raise TailError("replacement breaks monotonicity with the untreated interior")
    return sample.replace_incomes(new)


def weighted_quantile(values, weights, p: float) -> float:
    """Weighted empirical quantile with midpoint plotting positions."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    total = w.sum()
    if total <= 0:
        raise TailError("weights sum to zero")
    positions = (np.cumsum(w) - 0.5 * w) / total
    return float(np.interp(p, positions, v))


@dataclass(frozen=True)
class TreatmentReport:
    """What a treatment pass did: flags, fits and replacement counts."""

    flags: OutlierFlags
    upper_fit: TailFit | None
    lower_fit: TailFit | None
    n_replaced_upper: int
    n_replaced_lower: int


def treat_sample(
    sample: WeightedSample,
    upper_level: float = 0.975,
    lower_level: float = 0.025,
    k_min: int = K_MIN,
    q_low: float = Q_LOW,
    q_high: float = Q_HIGH,
) -> tuple[WeightedSample, TreatmentReport]:
    """Full treatment pass: detect, fit each flagged side, replace.

    Tail thresholds sit at the weighted quantile levels given (0.975 / 0.025
    by default) but never beyond the fences, so the fit always sees at least
    the corresponding share of the data.  A side with fewer than ``k_min``
    exceedances is skipped with a warning instead of failing the pipeline.
    """
    x = sample.incomes
    flags = detect_outliers(x, q_low=q_low, q_high=q_high)
    up_mask = flags.flags & (x > flags.upper_fence)
    low_mask = flags.flags & (x < flags.lower_fence)
    upper_fit = lower_fit = None
    treated = sample
    if np.any(up_mask):
        threshold = min(flags.upper_fence, weighted_quantile(x, sample.weights, upper_level))
        try:
            upper_fit = fit_pareto_tail(x, threshold, UPPER, k_min=k_min)
        except TailError as exc:
            warnings.warn(f"upper tail treatment skipped: {exc}", stacklevel=2)
            up_mask[:] = False
    if np.any(low_mask):
        threshold = max(flags.lower_fence, weighted_quantile(x, sample.weights, lower_level))
        try:
            lower_fit = fit_pareto_tail(x, threshold, LOWER, k_min=k_min)
        except TailError as exc:
            warnings.warn(f"lower tail treatment skipped: {exc}", stacklevel=2)
            low_mask[:] = False
    if np.any(up_mask) or np.any(low_mask):
        effective = OutlierFlags(
            flags=up_mask | low_mask,
            lower_fence=flags.lower_fence,
            upper_fence=flags.upper_fence,
        )
        treated = treat_tails(sample, effective, upper=upper_fit, lower=lower_fit)
        # Cap replacements at the fences: a replacement beyond the fence would
        # re-qualify as an outlier on the next pass, so the pass would not be
        # idempotent.  The fences only depend on bulk quantiles, which tail
        # replacement leaves untouched.
        capped = np.clip(treated.incomes, flags.lower_fence, flags.upper_fence)
        capped = np.where(effective.flags, capped, treated.incomes)
        treated = treated.replace_incomes(capped)
    report = TreatmentReport(
        flags=flags,
        upper_fit=upper_fit,
        lower_fit=lower_fit,
        n_replaced_upper=int(np.count_nonzero(up_mask)),
        n_replaced_lower=int(np.count_nonzero(low_mask)),
    )
    return treated, report

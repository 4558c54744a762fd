"""Design-aware bootstrap for bias-corrected estimators, with calibration.

Replicates resample households with replacement within geographic
macro-strata; persons inherit their household's multiplicity and the
replicate weight is the original weight times that multiplicity.  When a
calibration spec is given, every replicate is raked to the auxiliary margins
(replicates leaving a margin category empty are redrawn a bounded number of
times).  Replicate RNG streams derive from (seed, replicate index), so
results do not depend on evaluation order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bias import corrected_estimate
from .design import DesignFrame
from .errors import BootstrapError, CalibrationError
from .measures import MeasureSpec, WeightedSample, ht_estimate

_MAX_REDRAWS = 10


@dataclass(frozen=True)
class CalibrationSpec:
    """Raking margins: (categorical variable name, {category: target total})."""

    margins: tuple
    tolerance: float = 1e-6
    max_iterations: int = 50

    def __post_init__(self):
        margins = tuple((str(name), dict(targets)) for name, targets in self.margins)
        for name, targets in margins:
            if not targets:
                raise CalibrationError(f"margin {name!r} has no categories")
            for cat, total in targets.items():
                if total <= 0:
                    raise CalibrationError(
                        f"margin {name!r} category {cat!r} has non-positive target"
                    )
        object.__setattr__(self, "margins", margins)


@dataclass(frozen=True)
class ReplicateWeights:
    """B x n matrix of replicate weights plus the resampling metadata."""

    weights: np.ndarray
    macro_strata: np.ndarray
    seed: int

    @property
    def b(self) -> int:
        return int(self.weights.shape[0])


def _margin_values(sample: WeightedSample, name: str) -> np.ndarray:
    if name in sample.aux:
        return np.asarray(sample.aux[name], dtype=object)
    if name == "stratum_id":
        return sample.stratum_ids
    raise CalibrationError(f"sample has no auxiliary variable {name!r}")


def calibrate(
    weights, sample: WeightedSample, spec: CalibrationSpec
) -> np.ndarray:
    """Iterative proportional fitting of weights to the margin totals.

    Returns the adjusted weights (all >= 0).  Raises
    :class:`CalibrationError` when a margin category has no weight to scale
    or when the loop does not reach the tolerance within the iteration cap.
    """
    w = np.asarray(weights, dtype=float).copy()
    if w.shape != (sample.n,):
        raise CalibrationError("weights must align with the sample")
    margins = []
    for name, targets in spec.margins:
        values = _margin_values(sample, name)
        masks = {}
        for cat, total in targets.items():
            mask = values == cat
            if not np.any(mask):
                raise CalibrationError(
                    f"margin {name!r} category {cat!r} is empty in the sample"
                )
            masks[cat] = mask
        uncovered = ~np.logical_or.reduce([m for m in masks.values()])
        if np.any(uncovered):
            raise CalibrationError(
                f"margin {name!r} does not cover every observation"
            )
        margins.append((name, targets, masks))

    def worst_gap(current):
        gap = 0.0
        for _, targets, masks in margins:
            for cat, total in targets.items():
                got = float(current[masks[cat]].sum())
                gap = max(gap, abs(got / total - 1.0))
        return gap

    for _ in range(spec.max_iterations):
        if worst_gap(w) <= spec.tolerance:
            return w
        for _, targets, masks in margins:
            for cat, total in targets.items():
                got = float(w[masks[cat]].sum())
                if got <= 0:
                    raise CalibrationError(
                        f"no positive weight left in category {cat!r}"
                    )
                w[masks[cat]] *= total / got
    gap = worst_gap(w)
    if gap <= spec.tolerance:
        return w
    raise CalibrationError(
        f"calibration did not converge: worst margin gap {gap:.3e}"
    )


def _household_structure(sample: WeightedSample, macro_strata: np.ndarray):
    """Group rows by (macro-stratum, household), preserving first appearance."""
    strata: dict[str, dict[str, list[int]]] = {}
    for row in range(sample.n):
        ms = str(macro_strata[row])
        hh = str(sample.household_ids[row])
        strata.setdefault(ms, {}).setdefault(hh, []).append(row)
    out = []
    for ms, households in strata.items():
        groups = [np.asarray(rows, dtype=int) for rows in households.values()]
        if len(groups) < 2:
            raise BootstrapError(
                f"macro-stratum {ms!r} has a single household; cannot resample"
            )
        out.append((ms, groups))
    return out


def bootstrap_resample(
    sample: WeightedSample,
    macro_strata,
    b: int,
    seed: int,
    calibration: CalibrationSpec | None = None,
) -> ReplicateWeights:
    """Draw B replicate weight vectors by household resampling within macro-strata.

    Parameters
    ----------
    sample : WeightedSample
    macro_strata : array-like
        Per-observation macro-stratum labels used as resampling strata.
    b : int
        Replicate count, at least 50.
    seed : int
        All replicate streams derive deterministically from this seed.
    calibration : CalibrationSpec, optional
        Rake every replicate to these margins; replicates leaving a margin
        category without weight are redrawn (up to 10 attempts).
    """
    if b < 50:
        raise BootstrapError(f"replicate count must be at least 50, got {b}")
    macro = np.asarray(macro_strata, dtype=object)
    if macro.shape != (sample.n,):
        raise BootstrapError("macro-strata labels must align with the sample")
    structure = _household_structure(sample, macro)

    margin_masks = []
    if calibration is not None:
        for name, targets in calibration.margins:
            values = _margin_values(sample, name)
            for cat in targets:
                margin_masks.append(values == cat)

    streams = np.random.SeedSequence(seed).spawn(b)
    weights = np.empty((b, sample.n), dtype=float)
    for rep in range(b):
        rng = np.random.default_rng(streams[rep])
        for attempt in range(_MAX_REDRAWS):
            w = np.zeros(sample.n, dtype=float)
            for _, groups in structure:
                m_h = len(groups)
                draws = rng.integers(0, m_h, size=m_h)
                mult = np.bincount(draws, minlength=m_h)
                for g, rows in enumerate(groups):
                    if mult[g]:
                        w[rows] = sample.weights[rows] * mult[g]
            if all(float(w[mask].sum()) > 0 for mask in margin_masks):
                break
        else:
            raise BootstrapError(
                f"replicate {rep} left a margin category empty after "
                f"{_MAX_REDRAWS} redraws"
            )
        if calibration is not None:
            w = calibrate(w, sample, calibration)
        weights[rep] = w
    return ReplicateWeights(weights=weights, macro_strata=macro, seed=int(seed))


@dataclass
class BootstrapResult:
    """Replicate estimates and their dispersion summary."""

    point_estimate: float
    variance: float
    sd: float
    cv_of_estimator: float
    replicate_estimates: np.ndarray
    n_failed: int
    failures: list = field(default_factory=list)


def bootstrap_variance(
    sample: WeightedSample,
    frame: DesignFrame,
    spec: MeasureSpec,
    reps: ReplicateWeights,
    corrected: bool = False,
) -> BootstrapResult:
    """Bootstrap variance of a (optionally bias-corrected) measure estimator.

    Each replicate re-estimates with its weight vector; the variance is the
    sample variance across replicates.  Replicates failing to estimate are
    dropped and reported unless they exceed 5% of B, which raises
    :class:`BootstrapError`.
    """
    estimates = []
    failures = []
    for rep in range(reps.b):
        rep_sample = sample.replace_weights(reps.weights[rep])
        try:
            if corrected:
                value = corrected_estimate(rep_sample, frame, spec).theta_corrected
            else:
                value = ht_estimate(rep_sample, spec).theta
        except Exception as exc:  # noqa: BLE001 - replicate-level quarantine
            failures.append((rep, repr(exc)))
            continue
        estimates.append(value)
    n_failed = len(failures)
    if n_failed > 0.05 * reps.b:
        raise BootstrapError(
            f"{n_failed} of {reps.b} replicates failed; bootstrap is unstable"
        )
    if n_failed:
        warnings.warn(f"{n_failed} bootstrap replicates dropped", stacklevel=2)
    est = np.asarray(estimates, dtype=float)
    if corrected:
        point = corrected_estimate(sample, frame, spec).theta_corrected
    else:
        point = ht_estimate(sample, spec).theta
    variance = float(np.var(est, ddof=1)) if est.size > 1 else 0.0
    sd = float(np.sqrt(variance))
    cv = sd / abs(point) if point != 0 else float("inf") if sd > 0 else 0.0
    return BootstrapResult(
        point_estimate=point,
        variance=variance,
        sd=sd,
        cv_of_estimator=cv,
        replicate_estimates=est,
        n_failed=n_failed,
        failures=failures,
    )

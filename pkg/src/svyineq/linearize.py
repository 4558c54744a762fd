"""Linearized variables for the gamma components of the inequality estimators.

For measures whose gamma_hat is a weighted mean of a transform g(y), the
linearized variable is simply z_k = g(y_k): the gamma functional, written in
normalized weights, is linear and its weight derivative is exact.  The Gini
gamma involves estimated ranks, so its linearization is obtained numerically
by perturbing each normalized weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EstimationError
from .measures import MeasureSpec, WeightedSample, gamma_transform, gini_rank_order

ANALYTIC = "analytic"
NUMERIC = "numeric"

#: relative finite-difference step for weight perturbations
_FD_STEP = 1e-6


@dataclass(frozen=True)
class LinearizedSample:
    """Per-unit linearized values aligned with a sample."""

    z: np.ndarray
    measure: MeasureSpec
    kind: str


def gini_gamma_functional(sample: WeightedSample) -> Callable[[np.ndarray], float]:
    """Gini gamma as a smooth function of the normalized weight vector.

    In normalized weights the estimator reads
    sum_i wt_i y_i (Ntilde_i - wt_i / 2) with Ntilde_i the cumulative weight
    at or below unit i's rank; the rank order is fixed by the incomes, so the
    returned function is quadratic in the weights and safe to perturb.
    """
    order = gini_rank_order(sample.incomes)
    y_sorted = sample.incomes[order]

    def functional(wt: np.ndarray) -> float:
        w = wt[order]
        cum = np.cumsum(w)
        return float(np.sum(w * y_sorted * (cum - w / 2.0)))

    return functional


def linearize_numeric(
    sample: WeightedSample, functional: Callable[[np.ndarray], float]
) -> np.ndarray:
    """Central finite-difference derivative of a functional w.r.t. each weight.

    The functional receives the normalized weight vector wt = w / sum(w) and
    must treat it as free coordinates (no internal renormalization).  The step
    for unit k is 1e-6 * max(1, wt_k).

    Raises
    ------
    EstimationError
        If a perturbed evaluation is non-finite, naming the offending unit.
    """
    wt = sample.normalized_weights()
    n = wt.size
    z = np.empty(n, dtype=float)
    for k in range(n):
        h = _FD_STEP * max(1.0, wt[k])
        up = wt.copy()
        up[k] += h
        down = wt.copy()
        down[k] -= h
        f_up = functional(up)
        f_down = functional(down)
        if not (np.isfinite(f_up) and np.isfinite(f_down)):
            raise EstimationError(
                f"functional evaluated to a non-finite value at unit {k}"
            )
        z[k] = (f_up - f_down) / (2.0 * h)
    return z


def linearize_gamma(sample: WeightedSample, spec: MeasureSpec) -> LinearizedSample:
    """Linearized variable z_k for a measure's gamma component.

    Closed forms: y^2 (CV), log y (GE(0) and Atkinson(1)), y log y (GE(1)),
    y^alpha (GE(alpha)), y^(1-eps) (Atkinson(eps != 1)).  The Gini index uses
    the numeric weight-derivative of its gamma functional because the
    estimated rank of each unit depends on the realized sample.
    """
    if spec.family == "gini":
        z = linearize_numeric(sample, gini_gamma_functional(sample))
        return LinearizedSample(z=z, measure=spec, kind=NUMERIC)
    z = gamma_transform(spec, sample.incomes).astype(float)
    return LinearizedSample(z=z, measure=spec, kind=ANALYTIC)

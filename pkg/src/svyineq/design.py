"""Stratified multi-stage design structure and ultimate-cluster variance.

The variance estimator blends a with-finite-population-correction stratified
term for self-representing (SR) strata, where households are the sampling
units, with the ultimate-cluster with-replacement approximation for
non-self-representing (NSR) strata, where PSU-level weighted contributions
act as replicate draws:

    V(T) = sum_SR  M_h (M_h - m_h) / (m_h (m_h - 1)) * sum_i (t_hi - tbar_h)^2
         + sum_NSR n_h / (n_h - 1) * sum_d (T_hd - Tbar_h)^2

``variance_linear`` works on the scale of the weighted total sum_k w_k v_k;
``variance_pieces`` divides by the squared estimated population size to move
to the scale of the ratio-form estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DesignError, DomainError
from .linearize import linearize_gamma
from .measures import MeasureSpec, WeightedSample

#: numerical slack for the Cauchy-Schwarz sanity bound on covariances
_CS_SLACK = 1e-9


@dataclass(frozen=True)
class StratumInfo:
    """One stratum: identifiers, size information and member row indices."""

    stratum_id: str
    sr_flag: bool
    population_households: float  # M_h; NaN when unknown (NSR strata don't use it)
    households: tuple  # ((household_id, row-index array), ...) in input order
    psus: tuple  # ((psu_id, row-index array), ...); empty for SR strata

    @property
    def m_h(self) -> int:
        return len(self.households)

    @property
    def n_h(self) -> int:
        return len(self.psus)

    @property
    def rows(self) -> np.ndarray:
        groups = self.psus if self.psus else self.households
        if not groups:
            return np.empty(0, dtype=int)
        return np.concatenate([idx for _, idx in groups])


@dataclass(frozen=True)
class DesignFrame:
    """Stratum/PSU structure of a sample for variance estimation."""

    strata: tuple

    def __post_init__(self):
        seen = set()
        for st in self.strata:
            if st.stratum_id in seen:
                raise DesignError(f"duplicate stratum id {st.stratum_id!r}")
            seen.add(st.stratum_id)
            if st.sr_flag:
                if st.m_h < 1:
                    raise DesignError(f"SR stratum {st.stratum_id!r} has no households")
                if not math.isnan(st.population_households) and (
                    st.population_households < st.m_h
                ):
                    raise DesignError(
                        f"SR stratum {st.stratum_id!r} has M_h < m_h"
                    )
            else:
                if st.n_h < 1:
                    raise DesignError(f"NSR stratum {st.stratum_id!r} has no PSUs")

    @classmethod
    def from_sample(
        cls, sample: WeightedSample, population_households: dict | None = None
    ) -> "DesignFrame":
        """Build the frame from a sample's design labels.

        For SR strata the population household count M_h is taken from
        ``population_households`` when provided and otherwise estimated by the
        sum of household weights (the household weight is the mean weight of
        its members, which are equal under weight sharing).
        """
        order: dict[str, dict] = {}
        for row in range(sample.n):
            sid = str(sample.stratum_ids[row])
            entry = order.setdefault(
                sid, {"sr": bool(sample.sr_flags[row]), "hh": {}, "psu": {}}
            )
            if bool(sample.sr_flags[row]) != entry["sr"]:
                raise DesignError(f"stratum {sid!r} mixes SR and NSR rows")
            entry["hh"].setdefault(str(sample.household_ids[row]), []).append(row)
            entry["psu"].setdefault(str(sample.psu_ids[row]), []).append(row)
        strata = []
        for sid, entry in order.items():
            households = tuple(
                (hid, np.asarray(rows, dtype=int)) for hid, rows in entry["hh"].items()
            )
            if entry["sr"]:
                psus = ()
                if population_households and sid in population_households:
                    m_pop = float(population_households[sid])
                else:
                    m_pop = float(
                        sum(
                            np.mean(sample.weights[idx]) for _, idx in households
                        )
                    )
                strata.append(
                    StratumInfo(sid, True, m_pop, households, psus)
                )
            else:
                psus = tuple(
                    (pid, np.asarray(rows, dtype=int)) for pid, rows in entry["psu"].items()
                )
                strata.append(StratumInfo(sid, False, float("nan"), households, psus))
        return cls(strata=tuple(strata))

    def validate_membership(self, n_rows: int) -> None:
        """Check that every observation belongs to exactly one stratum."""
        seen = np.zeros(n_rows, dtype=int)
        for st in self.strata:
            seen[st.rows] += 1
        if np.any(seen != 1):
            bad = int(np.flatnonzero(seen != 1)[0])
            raise DesignError(f"row {bad} mapped to {seen[bad]} strata")


@dataclass(frozen=True)
class VariancePieces:
    """Variance components feeding the bias formulas, on the mean scale."""

    v_mu: float
    v_gamma: float
    cov_mu_gamma: float
    v_sum: float

    def __post_init__(self):
        if self.v_mu < 0 or self.v_gamma < 0 or self.v_sum < 0:
            raise DomainError("variance components must be non-negative")
        bound = self.v_mu * self.v_gamma * (1.0 + _CS_SLACK) + 1e-300
        if self.cov_mu_gamma**2 > bound:
            raise DomainError("covariance violates the Cauchy-Schwarz bound")


def _sr_term(stratum: StratumInfo, contributions: np.ndarray) -> float:
    m_h = stratum.m_h
    big_m = stratum.population_households
    if math.isnan(big_m):
        raise DesignError(
            f"SR stratum {stratum.stratum_id!r} lacks a population household count"
        )
    if big_m == m_h:
        return 0.0  # census stratum, f_h = 1
    if m_h < 2:
        raise DesignError(
            f"SR stratum {stratum.stratum_id!r} has one sampled household "
            "but is not a census stratum"
        )
    mean = math.fsum(contributions) / m_h
    ss = math.fsum((t - mean) ** 2 for t in contributions)
    return big_m * (big_m - m_h) / (m_h * (m_h - 1.0)) * ss


def _nsr_term(stratum: StratumInfo, contributions: np.ndarray) -> float:
    n_h = stratum.n_h
    if n_h < 2:
        raise DesignError(
            f"NSR stratum {stratum.stratum_id!r} has a single PSU; "
            "collapse strata before estimating variance"
        )
    mean = math.fsum(contributions) / n_h
    ss = math.fsum((t - mean) ** 2 for t in contributions)
    return n_h / (n_h - 1.0) * ss


def variance_linear(
    values, sample: WeightedSample, frame: DesignFrame
) -> float:
    """Design variance of the weighted total sum_k w_k values_k.

    SR strata contribute household-level sums of w * values scaled by the
    sampling fraction m_h / M_h, so that a self-weighted stratum reduces to
    raw household totals; NSR strata contribute weighted PSU totals under the
    with-replacement ultimate-cluster approximation.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (sample.n,):
        raise DomainError("values must align with the sample")
    frame.validate_membership(sample.n)
    wv = sample.weights * values
    terms = []
    for st in frame.strata:
        if st.sr_flag:
            f_h = st.m_h / st.population_households if st.population_households else 1.0
            contrib = np.array(
                [f_h * math.fsum(wv[idx]) for _, idx in st.households]
            )
            terms.append(_sr_term(st, contrib))
        else:
            contrib = np.array([math.fsum(wv[idx]) for _, idx in st.psus])
            terms.append(_nsr_term(st, contrib))
    total = math.fsum(terms)
    return float(total)


def covariance_linear(
    values_a, values_b, sample: WeightedSample, frame: DesignFrame
) -> float:
    """Design covariance by polarization: (V(a+b) - V(a) - V(b)) / 2."""
    values_a = np.asarray(values_a, dtype=float)
    values_b = np.asarray(values_b, dtype=float)
    v_sum = variance_linear(values_a + values_b, sample, frame)
    v_a = variance_linear(values_a, sample, frame)
    v_b = variance_linear(values_b, sample, frame)
    return 0.5 * (v_sum - v_a - v_b)


def collapse_strata(
    frame: DesignFrame, sample: WeightedSample, similarity_key=None
) -> DesignFrame:
    """Merge singleton-PSU NSR strata into pseudo-strata with >= 2 PSUs.

    Strata are ordered by ``similarity_key`` (default: weighted mean income of
    the stratum) and singleton strata are paired with their nearest neighbour
    in that ordering, preferring other singletons so that a pair of lone PSUs
    forms one valid pseudo-stratum.

    Raises
    ------
    DesignError
        If a singleton NSR stratum has no merge partner at all.
    """
    nsr = [st for st in frame.strata if not st.sr_flag]
    if not nsr:
        raise DesignError("no NSR strata to collapse")
    singles = [st for st in nsr if st.n_h < 2]
    if not singles:
        return frame

    if similarity_key is None:
        def key_of(st: StratumInfo) -> float:
            rows = st.rows
            w = sample.weights[rows]
            tw = w.sum()
            if tw <= 0:
                return float(np.mean(sample.incomes[rows]))
            return float(np.dot(w, sample.incomes[rows]) / tw)
    else:
        mapping = dict(similarity_key)

        def key_of(st: StratumInfo) -> float:
            return float(mapping[st.stratum_id])

    ordered = sorted(nsr, key=key_of)
    merged: list[list[StratumInfo]] = []
    pending: list[StratumInfo] = []
    # pair neighbouring singletons first; attach leftovers to the nearest group
    for st in ordered:
        if st.n_h >= 2:
            merged.append([st])
            continue
        if pending:
            merged.append([pending.pop(), st])
        else:
            pending.append(st)
    if pending:
        leftover = pending.pop()
        if not merged:
            raise DesignError(
                f"NSR stratum {leftover.stratum_id!r} has one PSU and no merge partner"
            )
        pos = key_of(leftover)
        nearest = min(
            range(len(merged)),
            key=lambda i: min(abs(key_of(st) - pos) for st in merged[i]),
        )
        merged[nearest].append(leftover)

    new_strata = []
    for st in frame.strata:
        if st.sr_flag:
            new_strata.append(st)
    for group in merged:
        if len(group) == 1:
            new_strata.append(group[0])
            continue
        sid = "+".join(st.stratum_id for st in group)
        households = tuple(
            (f"{st.stratum_id}/{hid}", idx) for st in group for hid, idx in st.households
        )
        psus = tuple(
            (f"{st.stratum_id}/{pid}", idx) for st in group for pid, idx in st.psus
        )
        new_strata.append(
            StratumInfo(sid, False, float("nan"), households, psus)
        )
    return DesignFrame(strata=tuple(new_strata))


def variance_pieces(
    sample: WeightedSample,
    frame: DesignFrame,
    spec: MeasureSpec,
    linearized=None,
    auto_collapse: bool = False,
) -> VariancePieces:
    """V(mu_hat), V(gamma_hat) and their covariance on the mean scale.

    The income vector drives V(mu_hat); the measure's linearized variable
    drives V(gamma_hat); the covariance comes from the polarization identity.
    All three are the weighted-total variances divided by the squared
    estimated population size, matching the ratio-form estimators.
    """
    if auto_collapse and any(
        (not st.sr_flag) and st.n_h < 2 for st in frame.strata
    ):
        frame = collapse_strata(frame, sample)
    z = linearized if linearized is not None else linearize_gamma(sample, spec).z
    z = np.asarray(z, dtype=float)
    y = sample.incomes
    nhat2 = sample.total_weight ** 2
    if nhat2 <= 0:
        raise DomainError("total weight must be positive")
    v_mu = variance_linear(y, sample, frame) / nhat2
    v_gamma = variance_linear(z, sample, frame) / nhat2
    v_sum = variance_linear(y + z, sample, frame) / nhat2
    cov = 0.5 * (v_sum - v_mu - v_gamma)
    return VariancePieces(v_mu=v_mu, v_gamma=v_gamma, cov_mu_gamma=cov, v_sum=v_sum)

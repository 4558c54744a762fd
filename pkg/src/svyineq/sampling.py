"""Samplers for the Monte Carlo studies: SRS, Midzuno, two-stage stratified.

Each sampler returns the drawn sample together with the design frame used by
the variance machinery.  Unequal-probability draws attach inverse-inclusion
design weights; the two-stage sampler mimics household income surveys with
take-all (SR) strata and PSU-sampling (NSR) strata.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .design import DesignFrame
from .errors import DomainError
from .measures import IncomePopulation, WeightedSample
from .populations import PopulationModel, model_cdf


# ---------------------------------------------------------------------------
# probability-weight bands and Midzuno sampling
# ---------------------------------------------------------------------------


def assign_probability_weights(
    pop: IncomePopulation, s: int, reference: PopulationModel
) -> np.ndarray:
    """Band-wise auxiliary size values on a 10-to-1 scale.

    Units below the reference distribution's 1/s quantile get 10, units above
    the (s-1)/s quantile get 1, and the j-th intermediate band gets
    10 - 9 j / (s - 1), so low incomes carry large size values.
    """
    if s < 2:
        raise DomainError("band count must be at least 2")
    u = model_cdf(reference, pop.incomes)
    j = np.ceil(u * s) - 1.0
    j = np.clip(j, 0.0, s - 1.0)
    return 10.0 - 9.0 * j / (s - 1.0)


def midzuno_inclusion_probabilities(p, n: int) -> np.ndarray:
    """First-order inclusion probabilities of the Midzuno design.

    pi_i = (n - 1)/(N - 1) + q_i (N - n)/(N - 1) with q_i = p_i / sum(p).
    """
    p = np.asarray(p, dtype=float)
    big_n = p.size
    if not (1 < n < big_n):
        raise DomainError("need 1 < n < N for Midzuno sampling")
    if np.any(p <= 0):
        raise DomainError("size values must be strictly positive")
    q = p / p.sum()
    return (n - 1.0) / (big_n - 1.0) + q * (big_n - n) / (big_n - 1.0)


def _midzuno_indices(q: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """One Midzuno draw: first unit with probability q, rest by SRSWOR."""
    big_n = q.size
    first = int(rng.choice(big_n, p=q))
    rest = np.delete(np.arange(big_n), first)
    others = rng.choice(rest, size=n - 1, replace=False)
    return np.concatenate(([first], others))


def midzuno_sample(
    pop: IncomePopulation, p, n: int, seed
) -> tuple[WeightedSample, DesignFrame]:
    """Fixed-size unequal-probability sample with inverse-inclusion weights.

    The frame treats every draw as its own PSU inside a single NSR stratum,
    which is the with-replacement approximation used for variance estimation
    under this design.
    """
    p = np.asarray(p, dtype=float)
    pi = midzuno_inclusion_probabilities(p, n)
    rng = np.random.default_rng(seed)
    idx = _midzuno_indices(p / p.sum(), n, rng)
    idx = np.sort(idx)
    labels = [str(i) for i in idx]
    sample = WeightedSample(
        incomes=pop.incomes[idx],
        weights=1.0 / pi[idx],
        household_ids=labels,
        stratum_ids=["midzuno"] * n,
        psu_ids=labels,
        sr_flags=[False] * n,
    )
    return sample, DesignFrame.from_sample(sample)


# ---------------------------------------------------------------------------
# simple random sampling
# ---------------------------------------------------------------------------


def srs_sample(
    pop: IncomePopulation, n: int, seed
) -> tuple[WeightedSample, DesignFrame]:
    """Simple random sample without replacement; single SR stratum with fpc."""
    big_n = pop.size
    if not (1 < n <= big_n):
        raise DomainError("need 1 < n <= N for simple random sampling")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(big_n, size=n, replace=False))
    labels = [str(i) for i in idx]
    sample = WeightedSample(
        incomes=pop.incomes[idx],
        weights=np.full(n, big_n / n),
        household_ids=labels,
        stratum_ids=["srs"] * n,
        psu_ids=labels,
        sr_flags=[True] * n,
    )
    frame = DesignFrame.from_sample(sample, population_households={"srs": big_n})
    return sample, frame


# ---------------------------------------------------------------------------
# framed populations and two-stage sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FramedPopulation:
    """A person-level population organized into strata, PSUs and households.

    Household members share the income value and, once sampled, the design
    weight.  SR strata have no PSU level: households are sampled directly.
    """

    incomes: np.ndarray
    household_ids: np.ndarray
    stratum_ids: np.ndarray
    psu_ids: np.ndarray
    sr_flags: np.ndarray

    @property
    def size(self) -> int:
        return int(self.incomes.size)

    def population(self) -> IncomePopulation:
        return IncomePopulation(incomes=self.incomes)

    def household_counts(self) -> dict:
        """Households per stratum (population counts feeding the SR fpc)."""
        counts: dict[str, set] = {}
        for sid, hid in zip(self.stratum_ids, self.household_ids):
            counts.setdefault(str(sid), set()).add(str(hid))
        return {sid: len(hh) for sid, hh in counts.items()}


def make_framed_population(
    incomes,
    n_strata: int = 10,
    n_sr: int = 2,
    psus_per_stratum: int = 5,
    seed=0,
    max_household_size: int = 4,
) -> FramedPopulation:
    """Organize incomes into a synthetic survey frame.

    Incomes are sorted and dealt into strata in contiguous blocks (so strata
    differ in income level, as regions do), households of 1 to
    ``max_household_size`` persons share one income value, and NSR strata
    spread their households over PSUs round-robin.
    """
    incomes = np.asarray(incomes, dtype=float)
    if np.any(incomes <= 0):
        raise DomainError("all incomes must be strictly positive")
    rng = np.random.default_rng(seed)
    order = np.argsort(incomes, kind="stable")
    blocks = np.array_split(order, n_strata)
    rows_income = []
    rows_hh = []
    rows_stratum = []
    rows_psu = []
    rows_sr = []
    for s_idx, block in enumerate(blocks):
        sid = f"s{s_idx:02d}"
        sr = s_idx < n_sr
        hh_counter = 0
        pos = 0
        values = incomes[block]
        rng.shuffle(values)
        psu_persons = [0] * psus_per_stratum  # balance PSU sizes greedily
        while pos < values.size:
            size = int(rng.integers(1, max_household_size + 1))
            size = min(size, values.size - pos)
            hid = f"{sid}h{hh_counter:05d}"
            if sr:
                pid = hid
            else:
                smallest = min(range(psus_per_stratum), key=psu_persons.__getitem__)
                psu_persons[smallest] += size
                pid = f"{sid}p{smallest:02d}"
            income = float(values[pos])  # household members share the income
            for _ in range(size):
                rows_income.append(income)
                rows_hh.append(hid)
                rows_stratum.append(sid)
                rows_psu.append(pid)
                rows_sr.append(sr)
            hh_counter += 1
            pos += size
    return FramedPopulation(
        incomes=np.asarray(rows_income, dtype=float),
        household_ids=np.asarray(rows_hh, dtype=object),
        stratum_ids=np.asarray(rows_stratum, dtype=object),
        psu_ids=np.asarray(rows_psu, dtype=object),
        sr_flags=np.asarray(rows_sr, dtype=bool),
    )


def _systematic_pick(count: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Systematic selection of about rate * count items out of count."""
    m = int(round(count * rate))
    if m < 1:
        return np.empty(0, dtype=int)
    if m >= count:
        return np.arange(count)
    step = count / m
    start = rng.uniform(0.0, step)
    idx = np.floor(start + step * np.arange(m)).astype(int)
    return np.minimum(idx, count - 1)


def two_stage_sample(
    framed: FramedPopulation,
    rate: float,
    seed,
    psus_sampled: int = 2,
) -> tuple[WeightedSample, DesignFrame]:
    """Two-stage stratified sample of households.

    SR strata take a systematic household sample at the target rate.  NSR
    strata first select PSUs without replacement, then take a systematic
    household sample inside each selected PSU at a rate inflated so the
    overall stratum rate matches; weights are inverse overall inclusion
    probabilities.  Strata where the rate yields no household are skipped
    with a warning.
    """
    if not (0.0 < rate <= 1.0):
        raise DomainError("sampling rate must be in (0, 1]")
    rng = np.random.default_rng(seed)
    take_rows: list[int] = []
    take_weight: list[float] = []
    household_counts: dict[str, float] = {}

    strata: dict[str, dict] = {}
    for row in range(framed.size):
        sid = str(framed.stratum_ids[row])
        entry = strata.setdefault(
            sid, {"sr": bool(framed.sr_flags[row]), "psus": {}}
        )
        pid = str(framed.psu_ids[row])
        entry["psus"].setdefault(pid, {}).setdefault(
            str(framed.household_ids[row]), []
        ).append(row)

    def size_ordered(households):
        # implicit stratification: systematic selection over a size-ordered
        # frame balances household sizes, keeping person totals calibrated
        return sorted(households, key=len)

    for sid, entry in strata.items():
        psus = entry["psus"]
        if entry["sr"]:
            households = size_ordered(
                [rows for psu in psus.values() for rows in psu.values()]
            )
            m_pop = len(households)
            picked = _systematic_pick(m_pop, rate, rng)
            if picked.size == 0:
                warnings.warn(
                    f"stratum {sid!r} skipped: rate {rate} selects no household",
                    stacklevel=2,
                )
                continue
            household_counts[sid] = float(m_pop)
            weight = m_pop / picked.size
            for h_idx in picked:
                for row in households[h_idx]:
                    take_rows.append(row)
                    take_weight.append(weight)
        else:
            psu_ids = list(psus)
            k_pop = len(psu_ids)
            k = min(max(1, psus_sampled), k_pop)
            rate2 = rate * k_pop / k
            if rate2 > 1.0:
                k = min(k_pop, math.ceil(rate * k_pop))
                rate2 = min(1.0, rate * k_pop / k)
            chosen = rng.choice(k_pop, size=k, replace=False)
            selected_any = False
            for p_idx in np.sort(chosen):
                households = size_ordered(list(psus[psu_ids[p_idx]].values()))
                picked = _systematic_pick(len(households), rate2, rng)
                if picked.size == 0:
                    continue
                selected_any = True
                weight = (k_pop / k) * (len(households) / picked.size)
                for h_idx in picked:
                    for row in households[h_idx]:
                        take_rows.append(row)
                        take_weight.append(weight)
            if not selected_any:
                warnings.warn(
                    f"stratum {sid!r} skipped: rate {rate} selects no household",
                    stacklevel=2,
                )

    if not take_rows:
        raise DomainError("the requested rate selects no household anywhere")
    rows = np.asarray(take_rows, dtype=int)
    sample = WeightedSample(
        incomes=framed.incomes[rows],
        weights=np.asarray(take_weight, dtype=float),
        household_ids=framed.household_ids[rows],
        stratum_ids=framed.stratum_ids[rows],
        psu_ids=framed.psu_ids[rows],
        sr_flags=framed.sr_flags[rows],
    )
    frame = DesignFrame.from_sample(sample, population_households=household_counts)
    return sample, frame

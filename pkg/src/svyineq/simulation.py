"""Monte Carlo harness: scenarios, error metrics, estimator-distribution fits.

A scenario generates a population from a parametric model, optionally treats
its tails, draws replicate samples with a chosen design, estimates every
configured measure with and without bias correction, and aggregates relative
bias and error metrics plus the shape of the estimator distributions.  All
randomness derives from the scenario seed through independent per-replicate
streams, so reports are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln
from scipy.stats import kurtosis, skew

from .bias import corrected_estimate
from .errors import DomainError, EstimationError, SimulationError
from .measures import (
    IncomePopulation,
    MeasureSpec,
    WeightedSample,
    ht_estimate,
    population_value,
    relative_entropy_transform,
)
from .populations import PopulationModel, generate_population
from .sampling import (
    assign_probability_weights,
    make_framed_population,
    midzuno_sample,
    srs_sample,
    two_stage_sample,
)
from .tails import treat_sample

SAMPLERS = ("srs", "midzuno", "two_stage")

DIST_FAMILIES = ("beta", "simplex", "llogistic")


# ---------------------------------------------------------------------------
# error metrics and moments
# ---------------------------------------------------------------------------


def arb_aare(estimates, truths) -> dict:
    """Average relative bias and average absolute relative error.

    ``estimates`` is a domains x replicates matrix (a vector is treated as a
    single domain); ``truths`` holds one population value per domain.  Both
    metrics average over replicates within a domain and then over domains;
    zero-truth domains are excluded with a warning.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 1:
        est = est[np.newaxis, :]
    truths = np.atleast_1d(np.asarray(truths, dtype=float))
    if truths.shape[0] != est.shape[0]:
        raise DomainError("one truth per domain is required")
    keep = truths != 0
    if not np.all(keep):
        warnings.warn(
            f"{int(np.count_nonzero(~keep))} zero-truth domain(s) excluded",
            stacklevel=2,
        )
    if not np.any(keep):
        raise DomainError("no domain has a nonzero truth")
    rel = est[keep] / truths[keep, np.newaxis] - 1.0
    per_domain_arb = rel.mean(axis=1)
    per_domain_aare = np.abs(rel).mean(axis=1)
    return {
        "arb": float(per_domain_arb.mean()),
        "aare": float(per_domain_aare.mean()),
        "per_domain_arb": per_domain_arb,
        "per_domain_aare": per_domain_aare,
    }


def empirical_moments(values) -> dict:
    """Moment-based skewness and excess kurtosis of an estimator sample."""
    x = np.asarray(values, dtype=float)
    if x.size < 4:
        raise DomainError("need at least 4 values for shape moments")
    if np.all(x == x[0]):
        raise DomainError("zero variance: moments undefined")
    return {
        "skewness": float(skew(x)),
        "excess_kurtosis": float(kurtosis(x, fisher=True)),
    }


# ---------------------------------------------------------------------------
# two-parameter distributions on (0, 1) for estimator samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorDistributionFit:
    """ML fit of a two-parameter family on (0, 1) estimator values."""

    family: str
    params: tuple
    loglik: float
    aic: float
    bic: float


def _logpdf_beta(x, a, b):
    return (
        gammaln(a + b)
        - gammaln(a)
        - gammaln(b)
        + (a - 1.0) * np.log(x)
        + (b - 1.0) * np.log1p(-x)
    )


def _logpdf_simplex(x, m, s2):
    d = (x - m) ** 2 / (x * (1.0 - x) * m**2 * (1.0 - m) ** 2)
    return -0.5 * (
        np.log(2.0 * np.pi * s2) + 3.0 * np.log(x * (1.0 - x))
    ) - d / (2.0 * s2)


def _logpdf_llogistic(x, m, b):
    # odds-power form: F(x) = 1 / (1 + (odds(m) / odds(x))^b)
    logit_x = np.log(x) - np.log1p(-x)
    logit_m = math.log(m) - math.log1p(-m)
    log_r = b * (logit_x - logit_m)
    return (
        math.log(b)
        + log_r
        - np.log(x * (1.0 - x))
        - 2.0 * np.logaddexp(0.0, log_r)
    )


def shrink_to_open_unit(values, n: int | None = None) -> np.ndarray:
    """Pull values off the {0, 1} boundary: x -> (x (n - 1) + 0.5) / n."""
    x = np.asarray(values, dtype=float)
    count = n if n is not None else x.size
    return (x * (count - 1) + 0.5) / count


def fit_estimator_distribution(
    values, family: str, shrink: bool = False
) -> EstimatorDistributionFit:
    """Maximum-likelihood fit of a (0, 1) family to estimator values.

    Families: ``beta`` (shape/shape), ``simplex`` (mean/dispersion) and
    ``llogistic`` (median/shape).  Values touching the boundary raise unless
    ``shrink`` applies the standard (x (n-1) + 0.5)/n adjustment.
    """
    if family not in DIST_FAMILIES:
        raise DomainError(f"unknown distribution family {family!r}")
    x = np.asarray(values, dtype=float)
    if x.size < 30:
        raise DomainError("need at least 30 values to fit")
    if shrink:
        x = shrink_to_open_unit(x)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError(
            "values touch the (0, 1) boundary; pass shrink=True to adjust"
        )

    mean = float(np.mean(x))
    var = float(np.var(x))
    var = min(max(var, 1e-12), mean * (1.0 - mean) * 0.999)

    def logit(v):
        return math.log(v) - math.log1p(-v)

    if family == "beta":
        # method-of-moments start
        common = mean * (1.0 - mean) / var - 1.0
        a0 = max(mean * common, 1e-2)
        b0 = max((1.0 - mean) * common, 1e-2)
        starts = [
            (math.log(a0), math.log(b0)),
            (math.log(a0) + 0.5, math.log(b0) - 0.5),
            (0.0, 0.0),
        ]

        def loglik_of(t):
            return _logpdf_beta(x, math.exp(t[0]), math.exp(t[1]))

        def unpack(t):
            return (math.exp(t[0]), math.exp(t[1]))

    elif family == "simplex":
        d0 = float(np.mean((x - mean) ** 2 / (x * (1 - x) * mean**2 * (1 - mean) ** 2)))
        starts = [
            (logit(mean), math.log(max(d0, 1e-6))),
            (logit(mean) + 0.5, math.log(max(d0, 1e-6)) + 1.0),
            (0.0, 0.0),
        ]

        def loglik_of(t):
            m = 1.0 / (1.0 + math.exp(-t[0]))
            return _logpdf_simplex(x, m, math.exp(t[1]))

        def unpack(t):
            return (1.0 / (1.0 + math.exp(-t[0])), math.exp(t[1]))

    else:  # llogistic
        med = float(np.median(x))
        starts = [
            (logit(med), 0.0),
            (logit(med) + 0.5, 1.0),
            (0.0, 0.5),
        ]

        def loglik_of(t):
            m = 1.0 / (1.0 + math.exp(-t[0]))
            return _logpdf_llogistic(x, m, math.exp(t[1]))

        def unpack(t):
            return (1.0 / (1.0 + math.exp(-t[0])), math.exp(t[1]))

    def objective(t):
        ll = loglik_of(t)
        if not np.all(np.isfinite(ll)):
            return np.inf
        return -float(np.sum(ll))

    best = None
    for start in starts:
        res = minimize(
            objective,
            np.asarray(start, dtype=float),
            method="Nelder-Mead",
            options={"maxiter": 2000, "fatol": 1e-10, "xatol": 1e-8},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun - 1e-12):
            best = res
    if best is None:
        raise EstimationError(f"{family} fit failed on the estimator sample")
    loglik = -float(best.fun)
    n = x.size
    return EstimatorDistributionFit(
        family=family,
        params=unpack(best.x),
        loglik=loglik,
        aic=-2.0 * loglik + 2.0 * 2,
        bic=-2.0 * loglik + 2.0 * math.log(n),
    )


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a Monte Carlo run needs, seed included."""

    model: PopulationModel
    population_size: int
    sampler: str
    replications: int
    seed: int
    measures: tuple
    sample_size: int | None = None
    rate: float | None = None
    treat: bool = False
    bands: int = 100
    reference_shape: float = 2.0
    reference_scale: float | None = None
    n_strata: int = 10
    n_sr: int = 2
    psus_per_stratum: int = 5
    psus_sampled: int = 2
    max_household_size: int = 4
    distribution_fits: bool = False
    shrink: bool = False

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise DomainError(f"unknown sampler {self.sampler!r}")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if self.sampler in ("srs", "midzuno"):
            if self.sample_size is None:
                raise DomainError(f"{self.sampler} requires sample_size")
            if not (2 <= self.sample_size <= self.population_size):
                raise DomainError("need N >= n >= 2")
        if self.sampler == "two_stage" and self.rate is None:
            raise DomainError("two_stage requires rate")
        if not self.measures:
            raise DomainError("at least one measure is required")
        object.__setattr__(self, "measures", tuple(self.measures))


@dataclass
class ScenarioReport:
    """Scenario outputs: truths, per-replicate estimates and summary tables."""

    config: ScenarioConfig
    truths: dict
    uncorrected: np.ndarray  # replications x measures (failed rows dropped)
    corrected: np.ndarray
    metrics: list
    moments: list
    n_failed: int
    failures: list = field(default_factory=list)
    dist_fits: list = field(default_factory=list)

    def measure_labels(self) -> list:
        return [spec.label() for spec in self.config.measures]


def _draw(config: ScenarioConfig, population, framed, p_values, seed):
    if config.sampler == "srs":
        return srs_sample(population, config.sample_size, seed)
    if config.sampler == "midzuno":
        return midzuno_sample(population, p_values, config.sample_size, seed)
    return two_stage_sample(
        framed, config.rate, seed, psus_sampled=config.psus_sampled
    )


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """Run a full scenario: generate, (treat), sample, estimate, aggregate.

    Fails with :class:`SimulationError` when more than 5% of replicates error
    out; individual failures are recorded and skipped otherwise.
    """
    root = np.random.SeedSequence(config.seed)
    pop_seed, frame_seed, *rep_seeds = root.spawn(config.replications + 2)
    population = generate_population(
        config.model, config.population_size, pop_seed
    )
    if config.treat:
        carrier = WeightedSample(
            incomes=population.incomes,
            weights=np.ones(population.size),
        )
        treated, _ = treat_sample(carrier)
        population = IncomePopulation(incomes=treated.incomes)

    framed = None
    p_values = None
    if config.sampler == "two_stage":
        framed = make_framed_population(
            population.incomes,
            n_strata=config.n_strata,
            n_sr=config.n_sr,
            psus_per_stratum=config.psus_per_stratum,
            seed=frame_seed,
            max_household_size=config.max_household_size,
        )
        population = framed.population()
    elif config.sampler == "midzuno":
        scale = (
            config.reference_scale
            if config.reference_scale is not None
            else float(population.incomes.min())
        )
        reference = PopulationModel(
            family="pareto", params={"shape": config.reference_shape, "scale": scale}
        )
        p_values = assign_probability_weights(population, config.bands, reference)

    truths = {
        spec.label(): population_value(population, spec).theta
        for spec in config.measures
    }

    uncorrected_rows = []
    corrected_rows = []
    failures = []
    for rep, seed in enumerate(rep_seeds):
        try:
            sample, frame = _draw(config, population, framed, p_values, seed)
            u_row = []
            c_row = []
            for spec in config.measures:
                u_row.append(ht_estimate(sample, spec).theta)
                c_row.append(
                    corrected_estimate(sample, frame, spec).theta_corrected
                )
        except Exception as exc:  # noqa: BLE001 - replicate-level quarantine
            failures.append((rep, repr(exc)))
            continue
        uncorrected_rows.append(u_row)
        corrected_rows.append(c_row)
    n_failed = len(failures)
    if n_failed > 0.05 * config.replications:
        raise SimulationError(
            f"{n_failed} of {config.replications} replicates failed"
        )

    uncorrected = np.asarray(uncorrected_rows, dtype=float)
    corrected = np.asarray(corrected_rows, dtype=float)
    labels = [spec.label() for spec in config.measures]

    metrics = []
    moments = []
    for j, label in enumerate(labels):
        truth = truths[label]
        entry = {"measure": label, "truth": truth}
        if truth != 0:
            m_u = arb_aare(uncorrected[:, j], [truth])
            m_c = arb_aare(corrected[:, j], [truth])
            entry.update(
                arb_uncorrected=m_u["arb"],
                aare_uncorrected=m_u["aare"],
                arb_corrected=m_c["arb"],
                aare_corrected=m_c["aare"],
            )
        else:
            entry.update(
                arb_uncorrected=float("nan"),
                aare_uncorrected=float("nan"),
                arb_corrected=float("nan"),
                aare_corrected=float("nan"),
            )
        metrics.append(entry)
        if uncorrected.shape[0] >= 4:
            try:
                mom_u = empirical_moments(uncorrected[:, j])
                mom_c = empirical_moments(corrected[:, j])
            except DomainError:
                continue
            moments.append(
                {
                    "measure": label,
                    "skewness_uncorrected": mom_u["skewness"],
                    "excess_kurtosis_uncorrected": mom_u["excess_kurtosis"],
                    "skewness_corrected": mom_c["skewness"],
                    "excess_kurtosis_corrected": mom_c["excess_kurtosis"],
                }
            )

    dist_fits = []
    if config.distribution_fits:
        dist_fits = _fit_unit_interval_measures(config, corrected, labels)

    return ScenarioReport(
        config=config,
        truths=truths,
        uncorrected=uncorrected,
        corrected=corrected,
        metrics=metrics,
        moments=moments,
        n_failed=n_failed,
        failures=failures,
        dist_fits=dist_fits,
    )


def _fit_unit_interval_measures(config, corrected, labels):
    """Fit the (0,1) families on estimates of unit-interval measures.

    GE(1) and GE(2) estimates are first rescaled by their population maxima;
    other GE parameters and the CV have unbounded support and are skipped.
    """
    out = []
    for j, (spec, label) in enumerate(zip(config.measures, labels)):
        values = corrected[:, j]
        if spec.family in ("gini", "atkinson"):
            pass
        elif spec.family == "ge" and spec.parameter in (1.0, 2.0):
            values = np.array(
                [
                    relative_entropy_transform(
                        v, spec.parameter, config.population_size
                    )
                    for v in values
                ]
            )
        else:
            continue
        inside = values[(values > 0.0) & (values < 1.0)] if not config.shrink else values
        if inside.size < 30:
            continue
        for family in DIST_FAMILIES:
            try:
                fit = fit_estimator_distribution(
                    inside, family, shrink=config.shrink
                )
            except (DomainError, EstimationError) as exc:
                warnings.warn(f"{family} fit skipped for {label}: {exc}", stacklevel=2)
                continue
            out.append(
                {
                    "measure": label,
                    "family": family,
                    "param1": fit.params[0],
                    "param2": fit.params[1],
                    "loglik": fit.loglik,
                    "aic": fit.aic,
                    "bic": fit.bic,
                }
            )
    return out


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_report(report: ScenarioReport, outdir, manifest_extra: dict | None = None):
    """Write estimates.csv, metrics.csv, moments.csv and the run manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    labels = report.measure_labels()

    rows = []
    for rep in range(report.uncorrected.shape[0]):
        for j, label in enumerate(labels):
            rows.append(
                (rep, label, report.uncorrected[rep, j], report.corrected[rep, j])
            )
    _write_csv(
        outdir / "estimates.csv",
        ["replicate", "measure", "uncorrected", "corrected"],
        rows,
    )

    _write_csv(
        outdir / "metrics.csv",
        [
            "measure",
            "truth",
            "arb_uncorrected",
            "aare_uncorrected",
            "arb_corrected",
            "aare_corrected",
        ],
        [
            (
                m["measure"],
                m["truth"],
                m["arb_uncorrected"],
                m["aare_uncorrected"],
                m["arb_corrected"],
                m["aare_corrected"],
            )
            for m in report.metrics
        ],
    )

    _write_csv(
        outdir / "moments.csv",
        [
            "measure",
            "skewness_uncorrected",
            "excess_kurtosis_uncorrected",
            "skewness_corrected",
            "excess_kurtosis_corrected",
        ],
        [
            (
                m["measure"],
                m["skewness_uncorrected"],
                m["excess_kurtosis_uncorrected"],
                m["skewness_corrected"],
                m["excess_kurtosis_corrected"],
            )
            for m in report.moments
        ],
    )

    if report.dist_fits:
        _write_csv(
            outdir / "distfits.csv",
            ["measure", "family", "param1", "param2", "loglik", "aic", "bic"],
            [
                (
                    f["measure"],
                    f["family"],
                    f["param1"],
                    f["param2"],
                    f["loglik"],
                    f["aic"],
                    f["bic"],
                )
                for f in report.dist_fits
            ],
        )

    import numpy
    import scipy

    from . import __version__

    manifest = {
        "seed": report.config.seed,
        "replications": report.config.replications,
        "failed_replicates": report.n_failed,
        "measures": labels,
        "versions": {
            "svyineq": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
        },
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")

"""Batch command-line front end.

Subcommands: ``estimate`` (point estimates, bias corrections, variance
components), ``bootstrap`` (replicate-weight variance with optional
calibration), ``treat`` (extreme-value treatment of a sample file) and
``simulate`` (Monte Carlo scenarios from a config file).

Exit codes: 0 success, 2 input or configuration error, 3 estimation error,
4 run-quality failure.  All randomness flows from explicit seeds.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import sys
from pathlib import Path

from .bias import bias_estimate
from .bootstrap import CalibrationSpec, bootstrap_resample, bootstrap_variance
from .design import collapse_strata
from .errors import (
    BootstrapError,
    ConfigError,
    SchemaError,
    SimulationError,
    SurveyInequalityError,
)
from .io import read_sample_csv, write_sample_csv
from .measures import MeasureSpec, ht_estimate
from .populations import PopulationModel, _PARAM_NAMES
from .simulation import ScenarioConfig, run_scenario, write_report
from .tails import treat_sample

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_RUN_QUALITY = 4


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def _parse_measures(texts) -> list:
    measures = []
    for chunk in texts:
        for token in chunk.split(","):
            token = token.strip()
            if token:
                measures.append(MeasureSpec.parse(token))
    if not measures:
        raise ConfigError("at least one --measure is required")
    return measures


def _prepare_frame(sample, frame):
    needs_collapse = any(
        (not st.sr_flag) and st.n_h < 2 for st in frame.strata
    )
    if needs_collapse:
        frame = collapse_strata(frame, sample)
    return frame


def cmd_estimate(args) -> int:
    try:
        sample, frame = read_sample_csv(args.input)
        measures = _parse_measures(args.measure)
    except (SchemaError, SurveyInequalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.treat:
        sample, _ = treat_sample(sample)
    frame = _prepare_frame(sample, frame)
    rows = []
    for spec in measures:
        try:
            if args.correct:
                report = bias_estimate(sample, frame, spec, clamp=args.clamp)
                rows.append(
                    (
                        spec.label(),
                        _fmt(report.theta_hat),
                        _fmt(report.bias_hat),
                        _fmt(report.theta_corrected),
                        _fmt(report.pieces.v_mu),
                        _fmt(report.pieces.v_gamma),
                        _fmt(report.pieces.cov_mu_gamma),
                        str(report.n_prime),
                    )
                )
            else:
                from .design import variance_pieces

                decomp = ht_estimate(sample, spec)
                pieces = variance_pieces(sample, frame, spec)
                rows.append(
                    (
                        spec.label(),
                        _fmt(decomp.theta),
                        "",
                        "",
                        _fmt(pieces.v_mu),
                        _fmt(pieces.v_gamma),
                        _fmt(pieces.cov_mu_gamma),
                        str(sample.n_prime),
                    )
                )
        except SurveyInequalityError as exc:
            print(f"error estimating {spec.label()}: {exc}", file=sys.stderr)
            return EXIT_ESTIMATION
    header = [
        "measure",
        "theta_hat",
        "bias_hat",
        "theta_corrected",
        "v_mu",
        "v_gamma",
        "cov",
        "n_prime",
    ]
    _write_rows(args.out, header, rows)
    return EXIT_OK


def _read_margins_csv(path) -> CalibrationSpec:
    margins: dict[str, dict] = {}
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["variable", "category", "total"]:
            raise SchemaError(
                f"{path}: margins file needs header variable,category,total"
            )
        for line_no, record in enumerate(reader, start=2):
            if len(record) != 3:
                raise SchemaError(f"{path}:{line_no}: expected 3 cells")
            variable, category, total = (c.strip() for c in record)
            try:
                margins.setdefault(variable, {})[category] = float(total)
            except ValueError:
                raise SchemaError(
                    f"{path}:{line_no}: total is not a number: {total!r}"
                ) from None
    if not margins:
        raise SchemaError(f"{path}: no margins defined")
    return CalibrationSpec(margins=tuple(margins.items()))


def cmd_bootstrap(args) -> int:
    try:
        sample, frame = read_sample_csv(args.input)
        measures = _parse_measures(args.measure)
        if len(measures) != 1:
            raise ConfigError("bootstrap expects exactly one --measure")
        spec = measures[0]
        calibration = _read_margins_csv(args.calibrate) if args.calibrate else None
        if args.macro_strata == "stratum_id":
            macro = sample.stratum_ids
        elif args.macro_strata in sample.aux:
            macro = sample.aux[args.macro_strata]
        else:
            raise ConfigError(
                f"macro-strata column {args.macro_strata!r} not found in the sample"
            )
    except (SchemaError, SurveyInequalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    frame = _prepare_frame(sample, frame)
    try:
        reps = bootstrap_resample(
            sample, macro, args.B, args.seed, calibration=calibration
        )
        result = bootstrap_variance(
            sample, frame, spec, reps, corrected=args.correct
        )
    except BootstrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_QUALITY
    except SurveyInequalityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    rows = [
        (str(i), _fmt(value)) for i, value in enumerate(result.replicate_estimates)
    ]
    rows.append(("point_estimate", _fmt(result.point_estimate)))
    rows.append(("variance", _fmt(result.variance)))
    rows.append(("sd", _fmt(result.sd)))
    rows.append(("cv_of_estimator", _fmt(result.cv_of_estimator)))
    rows.append(("failed_replicates", str(result.n_failed)))
    _write_rows(args.out, ["replicate", spec.label()], rows)
    return EXIT_OK


def cmd_treat(args) -> int:
    try:
        sample, _ = read_sample_csv(args.input)
    except (SchemaError, SurveyInequalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        treated, report = treat_sample(sample)
    except SurveyInequalityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    write_sample_csv(args.out, treated)
    print(
        f"replaced {report.n_replaced_upper} upper and "
        f"{report.n_replaced_lower} lower outliers"
    )
    return EXIT_OK


def _scenario_from_config(path) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    try:
        pop = parser["population"]
        family = pop.get("family", "").strip().lower()
        if family not in _PARAM_NAMES:
            raise ConfigError(f"unknown population family {family!r}")
        params = {
            name: pop.getfloat(name) for name in _PARAM_NAMES[family]
        }
        model = PopulationModel(family=family, params=params)
        size = pop.getint("size")

        samp = parser["sampling"]
        method = samp.get("method", "").strip().lower()
        run = parser["run"]
        measures = tuple(
            MeasureSpec.parse(token)
            for token in parser["measures"].get("list", "").split(",")
            if token.strip()
        )
        config = ScenarioConfig(
            model=model,
            population_size=size,
            sampler=method,
            sample_size=samp.getint("n", fallback=None),
            rate=samp.getfloat("rate", fallback=None),
            replications=run.getint("replications"),
            seed=run.getint("seed"),
            treat=run.getboolean("treat_tails", fallback=False),
            measures=measures,
            bands=samp.getint("bands", fallback=100),
            reference_shape=samp.getfloat("reference_shape", fallback=2.0),
            reference_scale=samp.getfloat("reference_scale", fallback=None),
            n_strata=samp.getint("strata", fallback=10),
            n_sr=samp.getint("sr_strata", fallback=2),
            psus_per_stratum=samp.getint("psus_per_stratum", fallback=5),
            psus_sampled=samp.getint("psus_sampled", fallback=2),
            max_household_size=samp.getint("max_household_size", fallback=4),
            distribution_fits=run.getboolean("distribution_fits", fallback=False),
            shrink=run.getboolean("shrink", fallback=False),
        )
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"bad scenario config {path}: {exc}") from exc
    return config


def cmd_simulate(args) -> int:
    try:
        config = _scenario_from_config(args.config)
    except (ConfigError, SurveyInequalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = run_scenario(config)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN_QUALITY
    except SurveyInequalityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    digest = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    write_report(report, args.out, manifest_extra={"config_sha256": digest})
    return EXIT_OK


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svyineq",
        description="Design-based inequality estimation with bias correction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate measures from a sample CSV")
    est.add_argument("input", help="sample CSV file")
    est.add_argument("--measure", action="append", required=True,
                     help="measure spec: gini, cv, ge:ALPHA, atkinson:EPS")
    est.add_argument("--correct", action="store_true",
                     help="apply the small-sample bias correction")
    est.add_argument("--treat", action="store_true",
                     help="treat extreme values before estimating")
    est.add_argument("--clamp", action="store_true",
                     help="truncate corrected estimates to the measure support")
    est.add_argument("--out", required=True, help="output CSV path")
    est.set_defaults(func=cmd_estimate)

    boot = sub.add_parser("bootstrap", help="bootstrap variance of an estimator")
    boot.add_argument("input")
    boot.add_argument("--measure", action="append", required=True)
    boot.add_argument("--B", type=int, default=500, help="replicate count")
    boot.add_argument("--seed", type=int, required=True)
    boot.add_argument("--macro-strata", default="stratum_id",
                      help="column defining resampling macro-strata")
    boot.add_argument("--calibrate", default=None,
                      help="margins CSV (variable,category,total)")
    boot.add_argument("--correct", action="store_true",
                      help="bootstrap the bias-corrected estimator")
    boot.add_argument("--out", required=True)
    boot.set_defaults(func=cmd_bootstrap)

    treat = sub.add_parser("treat", help="extreme-value treatment of a sample CSV")
    treat.add_argument("input")
    treat.add_argument("--out", required=True)
    treat.set_defaults(func=cmd_treat)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    sim.add_argument("config", help="scenario config file")
    sim.add_argument("--out", required=True, help="report output directory")
    sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

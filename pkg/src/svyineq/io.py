"""CSV ingestion and output for survey microdata samples.

The sample schema has mandatory columns household_id, person_id, stratum_id,
psu_id, sr_flag (0/1), weight (non-negative), income (positive) and optional
gender / age_class columns used for calibration.  Parsing is strict and
locale-independent; violations carry row and column diagnostics.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .design import DesignFrame
from .errors import SchemaError
from .measures import WeightedSample

MANDATORY_COLUMNS = (
    "household_id",
    "person_id",
    "stratum_id",
    "psu_id",
    "sr_flag",
    "weight",
    "income",
)

OPTIONAL_COLUMNS = ("gender", "age_class")


def read_sample_csv(path) -> tuple[WeightedSample, DesignFrame]:
    """Read a sample file, validate the schema and build the design frame.

    Raises
    ------
    SchemaError
        With row/column diagnostics on any violation.
    """
    path = Path(path)
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        missing = [c for c in MANDATORY_COLUMNS if c not in header]
        unknown = [
            c for c in header if c not in MANDATORY_COLUMNS + OPTIONAL_COLUMNS
        ]
        if missing:
            raise SchemaError(f"{path}: missing mandatory column(s) {missing}")
        if unknown:
            raise SchemaError(f"{path}: unknown column(s) {unknown}")
        col = {name: header.index(name) for name in header}

        rows = {name: [] for name in header}
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(header):
                raise SchemaError(
                    f"{path}:{line_no}: expected {len(header)} cells, got {len(record)}"
                )
            for name in header:
                cell = record[col[name]].strip()
                if cell == "":
                    raise SchemaError(
                        f"{path}:{line_no}: missing value in column {name!r}"
                    )
                rows[name].append(cell)

    if not rows["income"]:
        raise SchemaError(f"{path}: no data rows")

    def parse_float(name, minimum=None, strict=False):
        out = []
        for i, cell in enumerate(rows[name]):
            try:
                value = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}:{i + 2}: column {name!r} is not a number: {cell!r}"
                ) from None
            if minimum is not None:
                if strict and value <= minimum:
                    raise SchemaError(
                        f"{path}:{i + 2}: column {name!r} must be > {minimum}"
                    )
                if not strict and value < minimum:
                    raise SchemaError(
                        f"{path}:{i + 2}: column {name!r} must be >= {minimum}"
                    )
            out.append(value)
        return out

    incomes = parse_float("income", minimum=0.0, strict=True)
    weights = parse_float("weight", minimum=0.0, strict=False)
    sr_flags = []
    for i, cell in enumerate(rows["sr_flag"]):
        if cell not in ("0", "1"):
            raise SchemaError(
                f"{path}:{i + 2}: column 'sr_flag' must be 0 or 1, got {cell!r}"
            )
        sr_flags.append(cell == "1")

    aux = {name: rows[name] for name in OPTIONAL_COLUMNS if name in rows}
    aux["person_id"] = rows["person_id"]
    sample = WeightedSample(
        incomes=incomes,
        weights=weights,
        household_ids=rows["household_id"],
        stratum_ids=rows["stratum_id"],
        psu_ids=rows["psu_id"],
        sr_flags=sr_flags,
        aux=aux,
    )
    frame = DesignFrame.from_sample(sample)
    return sample, frame


def write_sample_csv(path, sample: WeightedSample, person_ids=None) -> None:
    """Write a sample back out in the input schema (used by the treat command)."""
    path = Path(path)
    aux_names = [n for n in OPTIONAL_COLUMNS if n in sample.aux]
    header = list(MANDATORY_COLUMNS) + aux_names
    if person_ids is None:
        if "person_id" in sample.aux:
            person_ids = sample.aux["person_id"]
        else:
            person_ids = [str(i) for i in range(sample.n)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(sample.n):
            row = [
                sample.household_ids[i],
                person_ids[i],
                sample.stratum_ids[i],
                sample.psu_ids[i],
                "1" if sample.sr_flags[i] else "0",
                format(float(sample.weights[i]), ".12g"),
                format(float(sample.incomes[i]), ".12g"),
            ]
            row.extend(str(sample.aux[name][i]) for name in aux_names)
            writer.writerow(row)

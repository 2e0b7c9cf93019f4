"""CSV ingestion and export of experiment datasets.

Layout: a header row, required columns ``W`` (0/1) and ``Y``, optional
``e`` (propensity) and ``Y0``/``Y1`` (potential outcomes, synthetic data
only). Every other column is a covariate. UTF-8, ``.`` as decimal point.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import ColumnKind, CovariateTable, DataError, RctDataset, infer_kind
from .synth import trim_outliers


@dataclass(frozen=True)
class IngestConfig:
    treatment: str = "W"
    outcome: str = "Y"
    propensity: Optional[str] = "e"
    e: Optional[float] = None
    kinds: Mapping[str, str] = field(default_factory=dict)
    drop: Sequence[str] = ("id",)
    potential: Sequence[str] = ("Y0", "Y1")
    trim_cap: Optional[float] = None


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{where}: cannot parse {text!r} as a number") from None


def ingest_csv(path, config: Optional[IngestConfig] = None) -> RctDataset:
    config = config or IngestConfig()
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    required = [config.treatment, config.outcome]
    use_e_column = config.e is None
    if use_e_column:
        if not config.propensity:
            raise DataError("either a propensity column or a constant e is required")
        required.append(config.propensity)
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{path}: missing required column(s) {missing}")

    problems = []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            problems.append(f"line {lineno}: {len(row)} cells, header has {len(header)}")
            continue
        for name, cell in zip(header, row):
            if cell.strip() == "":
                problems.append(f"line {lineno}, column {name!r}: missing cell")
    if problems:
        raise DataError(f"{path}: {len(problems)} malformed cell(s): " + "; ".join(problems[:10]), problems)

    raw = {name: [r[j].strip() for r in rows] for j, name in enumerate(header)}

    def numeric(name: str) -> np.ndarray:
        return np.array(
            [_parse_float(v, f"line {i + 2}, column {name!r}") for i, v in enumerate(raw[name])],
            dtype=np.float64,
        )

    W = numeric(config.treatment)
    if not np.all(np.isin(W, (0, 1))):
        bad = int(np.flatnonzero(~np.isin(W, (0, 1)))[0])
        raise DataError(f"line {bad + 2}: treatment must be 0 or 1, got {raw[config.treatment][bad]!r}")
    Y = numeric(config.outcome)
    e = numeric(config.propensity) if use_e_column else np.full(len(rows), float(config.e))
    if not np.all((e > 0) & (e < 1)):
        bad = int(np.flatnonzero(~((e > 0) & (e < 1)))[0])
        raise DataError(f"line {bad + 2}: propensity must lie in (0, 1), got {e[bad]}")

    pot_names = list(config.potential) if config.potential else []
    has_potential = bool(pot_names) and all(c in header for c in pot_names)
    y0 = y1 = None
    if has_potential:
        y0, y1 = numeric(pot_names[0]), numeric(pot_names[1])

    reserved = set(required) | set(config.drop) | (set(pot_names) if has_potential else set())
    if use_e_column:
        reserved.add(config.propensity)
    cov_names = [c for c in header if c not in reserved]
    columns, kinds = {}, {}
    for name in cov_names:
        kind = config.kinds.get(name)
        if kind is None:
            try:
                values = numeric(name)
                kind = infer_kind(values).value
            except DataError:
                kind = ColumnKind.CATEGORICAL.value
        if kind == ColumnKind.CATEGORICAL.value:
            columns[name] = np.array(raw[name], dtype=object)
        else:
            columns[name] = numeric(name)
        kinds[name] = kind
    table = CovariateTable.from_columns(columns, kinds)
    data = RctDataset.create(table, W, Y, e, y0, y1)
    if config.trim_cap is not None:
        data, _ = trim_outliers(data, config.trim_cap)
    return data


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_dataset_csv(data: RctDataset, path, include_potential: bool = True) -> None:
    table = data.covariates
    header = ["W", "Y", "e"]
    cols = [data.W.astype(int), data.Y, data.e]
    if include_potential and data.has_potential:
        header += ["Y0", "Y1"]
        cols += [data.y0, data.y1]
    for name, kind in zip(table.names, table.kinds):
        header.append(name)
        col = table.columns[name]
        cols.append(col.astype(int) if kind is ColumnKind.BINARY else col)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow([_fmt(c[i]) for c in cols])


def kinds_of(data: RctDataset) -> dict[str, str]:
    t = data.covariates
    return {name: kind.value for name, kind in zip(t.names, t.kinds)}

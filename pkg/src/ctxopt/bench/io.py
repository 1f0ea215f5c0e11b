"""CSV reading and writing with a fixed, locale-free number format."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from ..errors import SchemaError
from .data import Dataset

__all__ = ["load_csv", "save_csv", "save_dataset", "format_float", "RESULT_COLUMNS", "TIMING_COLUMNS"]

RESULT_COLUMNS = ("experiment", "method", "trial", "index", "param_bandwidth", "param_lambda", "value")
TIMING_COLUMNS = ("experiment", "method", "trial", "index", "seconds")

_COL = re.compile(r"^([gx])(\d+)$")


def format_float(v) -> str:
    """17 significant digits, enough for an exact float64 round-trip."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _ordered(header, prefix):
    idx = sorted(int(m.group(2)) for h in header if (m := _COL.match(h)) and m.group(1) == prefix)
    if not idx:
        raise SchemaError(f"missing column {prefix}1")
    for k in range(1, idx[-1] + 1):
        if k not in idx:
            raise SchemaError(f"missing column {prefix}{k}")
    return [f"{prefix}{k}" for k in range(1, idx[-1] + 1)]


def load_csv(path) -> Dataset:
    """Read a dataset with columns ``g1..gp`` and ``x1..xq``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file; missing column g1") from None
        rows = [r for r in reader if r]
    gcols = _ordered(header, "g")
    xcols = _ordered(header, "x")
    pos = {h: i for i, h in enumerate(header)}
    try:
        data = np.array([[float(r[pos[c]]) for c in gcols + xcols] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"malformed row: {exc}") from None
    data = data.reshape(len(rows), len(gcols) + len(xcols))
    return Dataset(data[:, : len(gcols)], data[:, len(gcols):])


def save_dataset(dataset: Dataset, path) -> None:
    p, q = dataset.covariates.shape[1], dataset.outcomes.shape[1]
    header = [f"g{k}" for k in range(1, p + 1)] + [f"x{k}" for k in range(1, q + 1)]
    rows = np.hstack([dataset.covariates, dataset.outcomes])
    save_csv([dict(zip(header, r)) for r in rows], path, columns=header)


def save_csv(rows, path, columns=RESULT_COLUMNS) -> None:
    """Write dict rows with the given column order; missing keys are a schema error."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            try:
                w.writerow([format_float(r[c]) for c in columns])
            except KeyError as exc:
                raise SchemaError(f"row is missing column {exc.args[0]}") from None

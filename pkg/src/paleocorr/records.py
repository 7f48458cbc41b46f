"""Proxy record files: CSV with ``#key: value`` metadata lines on top.

Columns ``depth`` and ``age`` are optional (at least one is required),
``value`` is required; other columns are ignored.  Ages are in years BP
and increase downcore.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .timeseries import TimeSeries


@dataclass(frozen=True)
class Record:
    values: np.ndarray
    depth: np.ndarray | None = None
    age: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def series(self, axis="age") -> TimeSeries:
        t = self.age if axis == "age" else self.depth
        if t is None:
            raise ParseError(f"record has no {axis} column")
        return TimeSeries(t, self.values)

    @property
    def name(self) -> str:
        return self.meta.get("name", "")


def read_record(path) -> Record:
    meta, body = {}, []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.lstrip().startswith("#"):
                key, sep, val = line.lstrip()[1:].partition(":")
                if sep:
                    meta[key.strip()] = val.strip()
            elif line.strip():
                body.append((lineno, line))
    if not body:
        raise ParseError("no header row", None, str(path))
    header_line, header = body[0][0], next(csv.reader([body[0][1]]))
    header = [h.strip().lower() for h in header]
    if "value" not in header:
        raise ParseError("missing required column 'value'", header_line, str(path))
    if "depth" not in header and "age" not in header:
        raise ParseError("need a 'depth' or 'age' column", header_line, str(path))
    cols = {name: header.index(name) for name in ("depth", "age", "value") if name in header}
    data = {name: [] for name in cols}
    for lineno, line in body[1:]:
        row = next(csv.reader([line]))
        try:
            for name, i in cols.items():
                data[name].append(float(row[i]))
        except (ValueError, IndexError):
            raise ParseError(f"bad row {line.strip()!r}", lineno, str(path)) from None
    arrays = {k: np.asarray(v) for k, v in data.items()}
    if len(arrays["value"]) < 2:
        raise ParseError("record needs at least 2 rows", None, str(path))
    if not all(np.all(np.isfinite(a)) for a in arrays.values()):
        raise ParseError("non-finite entries", None, str(path))
    order = np.argsort(arrays["age"] if "age" in arrays else arrays["depth"], kind="stable")
    arrays = {k: v[order] for k, v in arrays.items()}
    return Record(arrays["value"], arrays.get("depth"), arrays.get("age"), meta)


def write_record(path, values, depth=None, age=None, meta=None, fmt="{:.10g}"):
    cols = [(n, a) for n, a in (("depth", depth), ("age", age), ("value", values)) if a is not None]
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(n for n, _ in cols) + "\n")
        for row in zip(*(a for _, a in cols)):
            fh.write(",".join(fmt.format(float(v)) for v in row) + "\n")


def write_ensemble(path, depths, median, realizations, fmt="{:.10g}"):
    """Age ensemble as CSV: ``depth,median,r0,r1,...`` (one row per depth)."""
    real = np.atleast_2d(realizations)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["depth", "median"] + [f"r{k}" for k in range(len(real))]) + "\n")
        for i, d in enumerate(depths):
            vals = [d, median[i]] + list(real[:, i])
            fh.write(",".join(fmt.format(float(v)) for v in vals) + "\n")


def read_ensemble(path):
    """(depths, median, realizations) from a file written by ``write_ensemble``."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("empty ensemble file", None, str(path))
    header = [h.strip() for h in lines[0].split(",")]
    if header[:2] != ["depth", "median"] or len(header) < 3:
        raise ParseError("expected header depth,median,r0,...", 1, str(path))
    try:
        arr = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise ParseError(f"non-numeric entry: {exc}", None, str(path)) from None
    if arr.ndim != 2 or arr.shape[1] != len(header) or len(arr) < 2:
        raise ParseError("ragged or too short ensemble table", None, str(path))
    order = np.argsort(arr[:, 0], kind="stable")
    arr = arr[order]
    return arr[:, 0], arr[:, 1], arr[:, 2:].T.copy()

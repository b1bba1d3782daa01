"""File formats: atomic text/JSON writers and the CSV data readers.

CSV layouts (headers required, comma separated):
  unlabeled features   x1,...,xp
  labeled features     x1,...,xp,y          (y in {0,1})
  grouped features     group_id,x1,...,xp,label
  scored groups        group_id,score,label

Writers go through a temp file in the target directory plus rename, so
partially written outputs are never observed.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

from .core import Dataset, LabeledDataset
from .exceptions import CsvFormatError, SchemaError


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_rows(path):
    try:
        with open(path, "r", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError:
        raise
    if not rows:
        raise CsvFormatError(f"{path}: empty file", line=1)
    return rows


def _feature_header(header, path):
    expected = [f"x{i + 1}" for i in range(len(header))]
    if header != expected:
        raise SchemaError(
            f"{path}: expected feature columns x1..x{len(header)}, got {header}"
        )
    return len(header)


def _parse_floats(row, lineno, path):
    try:
        return [float(v) for v in row]
    except ValueError as exc:
        raise CsvFormatError(f"{path}:{lineno}: {exc}", line=lineno) from exc


def read_unlabeled_csv(path) -> Dataset:
    """Feature matrix with header x1..xp; zero data rows give an empty set."""
    rows = _read_rows(path)
    p = _feature_header(rows[0], path)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != p:
            raise CsvFormatError(
                f"{path}:{lineno}: expected {p} fields, got {len(row)}", line=lineno
            )
        data.append(_parse_floats(row, lineno, path))
    x = np.asarray(data, dtype=float) if data else np.zeros((0, p))
    return Dataset(x=x.reshape(-1, p))


def read_labeled_csv(path) -> LabeledDataset:
    """Features plus binary response; header x1..xp,y."""
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 2 or header[-1] != "y":
        raise SchemaError(f"{path}: expected columns x1..xp,y, got {header}")
    p = _feature_header(header[:-1], path)
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != p + 1:
            raise CsvFormatError(
                f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}", line=lineno
            )
        vals = _parse_floats(row, lineno, path)
        if vals[-1] not in (0.0, 1.0):
            raise CsvFormatError(
                f"{path}:{lineno}: y must be 0 or 1, got {row[-1]}", line=lineno
            )
        xs.append(vals[:-1])
        ys.append(vals[-1])
    x = np.asarray(xs, dtype=float) if xs else np.zeros((0, p))
    return LabeledDataset(x=x.reshape(-1, p), y=np.asarray(ys, dtype=float))


def read_grouped_csv(path):
    """Grouped features: header group_id,x1..xp,label.

    Returns a list of (group_id, x matrix, label vector) in first-appearance
    order of the group ids.
    """
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 3 or header[0] != "group_id" or header[-1] != "label":
        raise SchemaError(
            f"{path}: expected columns group_id,x1..xp,label, got {header}"
        )
    p = _feature_header(header[1:-1], path)
    order = []
    grouped = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != p + 2:
            raise CsvFormatError(
                f"{path}:{lineno}: expected {p + 2} fields, got {len(row)}", line=lineno
            )
        gid = row[0]
        vals = _parse_floats(row[1:], lineno, path)
        if vals[-1] not in (0.0, 1.0):
            raise CsvFormatError(
                f"{path}:{lineno}: label must be 0 or 1, got {row[-1]}", line=lineno
            )
        if gid not in grouped:
            grouped[gid] = ([], [])
            order.append(gid)
        grouped[gid][0].append(vals[:-1])
        grouped[gid][1].append(vals[-1])
    if not order:
        raise SchemaError(f"{path}: no data rows")
    return [
        (gid, np.asarray(grouped[gid][0], dtype=float), np.asarray(grouped[gid][1]))
        for gid in order
    ]


def format_float(v):
    """Deterministic compact float formatting used in CSV outputs."""
    return format(float(v), ".12g")


def write_matrix_csv(path, mat):
    lines = [",".join(format(float(v), ".17g") for v in row) for row in np.atleast_2d(mat)]
    atomic_write_text(path, "\n".join(lines) + "\n")

"""Reading count series from delimited text and writing structured reports."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import InputError, ParseError


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _to_count(text, lineno):
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{text!r} is not a number", line=lineno) from None
    if not math.isfinite(value) or value != int(value):
        raise ParseError(f"{text!r} is not an integer", line=lineno)
    if value < 0:
        raise ParseError(f"negative count {text!r}", line=lineno)
    return int(value)


def load_series(path, column=None) -> np.ndarray:
    """Load one column of nonnegative integer counts.

    Comma- or tab-delimited files and plain one-value-per-line files are
    accepted. A first row containing any non-numeric field is read as a
    header. ``column`` is a header name or a 0-based index; by default the
    last column is used (so ``date,count`` files work as is).
    """
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    with open(path, newline="") as fh:
        text = fh.read()
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise InputError(f"{path} is empty")
    delim = "\t" if any("\t" in ln for _, ln in lines) else ","
    rows = [(i, [f.strip() for f in row]) for (i, _), row in zip(lines, csv.reader((ln for _, ln in lines), delimiter=delim))]

    header = None
    if not all(_is_number(f) for f in rows[0][1] if f):
        header = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path} has a header but no data rows")

    if column is None:
        idx = -1
    elif isinstance(column, int) or (isinstance(column, str) and column.lstrip("-").isdigit()):
        idx = int(column)
    elif header is not None and column in header:
        idx = header.index(column)
    else:
        raise InputError(f"column {column!r} not found in {path}")

    values = []
    for lineno, fields in rows:
        try:
            cell = fields[idx]
        except IndexError:
            raise ParseError(f"missing column {column!r}", line=lineno) from None
        values.append(_to_count(cell, lineno))
    return np.asarray(values, dtype=np.int64)


def to_jsonable(obj):
    """Convert numpy containers and scalars into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dump_report(obj, path=None) -> str:
    """Serialize to JSON; Python float repr keeps every double exactly (17 digits at most)."""
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text)
    return text

"""Deterministic JSON/CSV rendering of run reports.

Floats are written with 17 significant digits so every value round-trips
exactly; the "timings" key is the only part of a report allowed to differ
between identical runs.
"""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable

import numpy as np

TIMING_KEY = "timings"


def to_plain(obj: Any) -> Any:
    """numpy scalars/arrays, tuples and dataclass-free containers to JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def format_float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    if x == 0:
        return "0.0"
    text = format(x, ".17g")
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


def _write(obj: Any, out: list[str], indent: int, level: int) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for k, (key, val) in enumerate(obj.items()):
            out.append(("," if k else "") + pad + json.dumps(key) + ": ")
            _write(val, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) or v is None for v in obj):
            out.append("[" + ", ".join(_scalar(v) for v in obj) + "]")
            return
        out.append("[")
        for k, val in enumerate(obj):
            out.append(("," if k else "") + pad)
            _write(val, out, indent, level + 1)
        out.append(end + "]")
    else:
        out.append(_scalar(obj))


def _scalar(v: Any) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    return json.dumps(v)


def dumps(obj: Any, indent: int = 2) -> str:
    out: list[str] = []
    _write(to_plain(obj), out, indent, 0)
    return "".join(out) + "\n"


def strip_timings(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k != TIMING_KEY}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


def rows_to_csv(rows: Iterable[dict]) -> str:
    rows = [to_plain(r) for r in rows]
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: format_float(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()

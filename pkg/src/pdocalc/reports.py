"""Deterministic JSON and CSV report writers."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"

_FLOAT_MARK = re.compile(r'"\\u0000F([^"]*)"')


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _prepare(obj):
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prepare(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_prepare(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return _fmt_float(x)
        return "\u0000F" + _fmt_float(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_prepare(obj.real), _prepare(obj.imag)]
    return obj


def dumps(obj) -> str:
    """JSON text with sorted keys and floats at 17 significant digits.

    Non-finite floats are written as the strings ``"inf"``, ``"-inf"`` and
    ``"nan"``.
    """
    text = json.dumps(_prepare(obj), indent=2, sort_keys=True)
    return _FLOAT_MARK.sub(lambda m: m.group(1), text) + "\n"


def envelope(command: str, verdict: str, parameters: dict, results: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "verdict": verdict,
        "parameters": parameters,
        "results": results,
    }


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt_float(float(v))
    if isinstance(v, (list, tuple, dict)):
        return _FLOAT_MARK.sub(lambda m: m.group(1), json.dumps(_prepare(v), sort_keys=True))
    return v


def csv_text(rows: list[dict]) -> str:
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def write_csv(path, rows: list[dict]) -> None:
    Path(path).write_text(csv_text(rows))

"""Row-table serialization shared by the command-line tools.

Rows are dicts with a fixed column order. Floats are written with 17
significant digits so CSV and JSON carry the same numbers; non-finite values
become the strings ``inf``, ``-inf`` and ``nan`` in both formats and missing
values are empty in CSV and ``null`` in JSON.
"""
from __future__ import annotations

import json
import math


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}" if math.isfinite(v) else repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return float(f"{v:.17g}") if math.isfinite(v) else repr(v)
    return v


def to_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_cell(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def to_json(rows, columns) -> str:
    out = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
    return json.dumps(out, indent=1) + "\n"


def render(rows, columns, fmt) -> str:
    if fmt == "csv":
        return to_csv(rows, columns)
    if fmt == "json":
        return to_json(rows, columns)
    raise ValueError(f"unknown format {fmt!r}")

"""Deterministic CSV/JSON serialization: sorted keys, 17-significant-digit
floats, newline-terminated lines.  Byte-identical output for identical data
is part of the contract, so no library JSON encoder is used (their float
formatting is not pinned to a digit count)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

SNAPSHOT_SCHEMA = "layerlab.snapshots.v1"
REPORT_SCHEMA = "layerlab.report.v1"
SWEEP_CSV_SCHEMA = "layerlab.sweep.v1"


def fmt(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def json_dumps(obj: Any, indent: int = 0) -> str:
    """Minimal JSON writer with deterministic key order and float format."""
    pad = " " * indent
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            return "null"  # JSON has no NaN/inf; absent-as-null keeps parsers happy
        return fmt(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{out}"'
    if isinstance(obj, dict):
        items = [
            f'{pad}  {json_dumps(str(k))}: {json_dumps(obj[k], indent + 2).lstrip()}'
            if isinstance(obj[k], (dict, list, tuple))
            else f'{pad}  {json_dumps(str(k))}: {json_dumps(obj[k])}'
            for k in sorted(obj, key=str)
        ]
        if not items:
            return "{}"
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        items = [f"{pad}  " + json_dumps(x, indent + 2).lstrip() for x in obj]
        if not items:
            return "[]"
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json_dumps(obj) + "\n")


def write_csv(path: Path, header: list[str], rows, schema: str) -> None:
    lines = [f"# schema: {schema}", ",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def write_snapshots_csv(path: Path, snapshots, mode: str) -> None:
    rows = []
    if mode == "radial":
        header = ["t", "r", "u"]
        for s in snapshots:
            rr = s.field.grid.centers
            for r, u in zip(rr, s.field.values):
                rows.append((s.t, r, u))
    else:
        header = ["t", "x", "y", "u"]
        for s in snapshots:
            g = s.field.grid
            for i, x in enumerate(g.x):
                for j, y in enumerate(g.y):
                    rows.append((s.t, x, y, float(s.field.values[i, j])))
    write_csv(path, header, rows, SNAPSHOT_SCHEMA)

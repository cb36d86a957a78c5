"""Readers for the layerlab output schemas, with strict validation.

A SchemaError must surface before any output file is created, so the CLI can
guarantee that invalid inputs never leave a partial image behind.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """Input file does not match the documented schema."""


def _read_csv(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (found {header})")
    body = rows[1:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    cols: dict[str, list[float]] = {c: [] for c in required}
    idx = {c: header.index(c) for c in required}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
        for c in required:
            try:
                cols[c].append(float(row[idx[c]]))
            except ValueError as exc:
                raise SchemaError(
                    f"{path}:{lineno}: column {c!r} is not numeric") from exc
    return {c: np.asarray(v) for c, v in cols.items()}


def read_snapshots(path: str | Path) -> dict[str, np.ndarray]:
    """Radial snapshot table with columns (t, r, u)."""
    return _read_csv(Path(path), ("t", "r", "u"))


def read_sweep(path: str | Path) -> dict[str, np.ndarray]:
    """Sweep table with columns (epsilon, t_gen, width, M0, t_min, b_fit)."""
    data = _read_csv(Path(path),
                     ("epsilon", "t_gen", "width", "M0", "t_min", "b_fit"))
    if np.any(data["epsilon"] <= 0):
        raise SchemaError(f"{path}: epsilon entries must be positive")
    return data


def read_report(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: no such file")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{p}: invalid JSON ({exc})") from exc
    for key in ("eps", "t_gen", "a", "M0"):
        if key not in doc:
            raise SchemaError(f"{p}: missing report key {key!r}")
    return doc

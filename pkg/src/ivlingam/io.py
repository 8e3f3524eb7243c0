"""Reading and writing datasets, graphs, models and reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import InputError
from .graph import Dag
from .sem import LinearSem


def load_dataset(path: str | Path) -> Dataset:
    """CSV with a header row of unique names and one numeric row per sample; centered on load."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or any(not h.strip() for h in header):
            raise InputError(f"{path}:1: missing or empty column name in header")
        header = [h.strip() for h in header]
        seen = set()
        for h in header:
            if h in seen:
                raise InputError(f"{path}:1: duplicate column name {h!r}")
            seen.add(h)
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                bad = next(c for c in row if not _is_float(c))
                raise InputError(f"{path}:{line}: non-numeric cell {bad!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{line}: missing or non-finite value")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return Dataset(header, np.array(rows))


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_dataset(data: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.columns)
        for row in data.values:
            w.writerow([repr(float(v)) for v in row])


def _load_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def load_graph(path: str | Path) -> Dag:
    return Dag.from_dict(_load_json(path))


def load_model(path: str | Path) -> LinearSem:
    return LinearSem.from_dict(_load_json(path))


def load_json(path: str | Path) -> dict:
    return _load_json(path)


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def write_report(report, path: str | Path, table_path: str | Path | None = None) -> None:
    """Benchmark report as JSON, plus the aligned text table next to it (``<path>.txt`` by default)."""
    path = Path(path)
    path.write_text(report.to_json() + "\n")
    Path(table_path or path.with_suffix(".txt")).write_text(report.table())

"""Delimited output: time series, run manifest and check report.

All files are written to a temporary sibling and renamed into place, so
readers never observe partial files.  Floats are rendered with 17
significant digits, which round-trips IEEE doubles exactly; a rerun of a
deterministic command therefore reproduces every output byte for byte.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

SERIES_NAME = "series.csv"
MANIFEST_NAME = "manifest"
REPORT_NAME = "report"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "PASS" if v else "FAIL"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise ValueError(f"non-finite value in output: {v}")
        return f"{float(v):.17g}"
    return str(v)


def atomic_write(path: str | Path, text: str) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def write_timeseries(rows: Sequence[Mapping[str, object]], path: str | Path) -> Path:
    """Comma-delimited series: header from the first row's keys, every row
    must carry exactly the same columns, every value must be finite."""
    if not rows:
        raise ValueError("no rows to write")
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for i, row in enumerate(rows):
        if list(row.keys()) != columns:
            raise ValueError(f"row {i} columns differ from header")
        lines.append(",".join(format_value(row[c]) for c in columns))
    return atomic_write(path, "\n".join(lines) + "\n")


def read_timeseries(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a written series, floats where possible."""
    lines = Path(path).read_text().strip().split("\n")
    columns = lines[0].split(",")
    raw = [line.split(",") for line in lines[1:]]
    out = {}
    for j, name in enumerate(columns):
        vals = [r[j] for r in raw]
        try:
            out[name] = np.array([float(v) for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def write_report(entries: Sequence[tuple[str, object]], path: str | Path) -> Path:
    """'key: value' lines; booleans render as PASS/FAIL."""
    lines = [f"{k}: {format_value(v)}" for k, v in entries]
    return atomic_write(path, "\n".join(lines) + "\n")


def read_report(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().strip().split("\n"):
        key, _, value = line.partition(": ")
        out[key] = value
    return out

"""Delimited-text writers shared by every exporter.

Floats are written with 17 significant digits so files round-trip exactly
and are byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if x != x:
        return "nan"
    return f"{x:.17g}"


def header_lines(header: str | dict | None) -> list[str]:
    if not header:
        return []
    if isinstance(header, dict):
        header = " ".join(f"{k}={fmt(v)}" for k, v in header.items())
    return [f"# {line}" for line in str(header).splitlines()]


def write_rows(path, columns: Sequence[str], rows: Iterable[Sequence], header=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines(header):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def write_table(path, columns: Sequence[str], data: np.ndarray, header=None) -> Path:
    return write_rows(path, columns, np.asarray(data).tolist(), header)


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Read back a file written by :func:`write_rows`, skipping comments."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]

"""Tabular output: CSV files plus whitespace-delimited plot-data twins."""

from __future__ import annotations

import csv
import math
from pathlib import Path

FLOAT_FMT = "%.9g"


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return FLOAT_FMT % value
    if hasattr(value, "item"):  # numpy scalar
        return _cell(value.item())
    return "" if value is None else str(value)


def format_rows(rows) -> list[list[str]]:
    return [[_cell(v) for v in row] for row in rows]


def write_csv(path, header, rows) -> Path:
    """UTF-8, comma-delimited, header first, floats at 9 significant digits."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(format_rows(rows))
    return path


def write_dat(path, header, rows) -> Path:
    """Column-oriented plot data: '#'-prefixed header, whitespace separators.

    Text cells have spaces replaced by underscores so columns stay aligned.
    """
    path = Path(path)
    lines = ["# " + " ".join(header)]
    for row in format_rows(rows):
        lines.append(" ".join(c.replace(" ", "_") if c else "-" for c in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_table(directory, stem: str, header, rows) -> list[Path]:
    """Write ``stem``.csv and ``stem``.dat side by side."""
    rows = list(rows)
    d = Path(directory)
    return [write_csv(d / f"{stem}.csv", header, rows), write_dat(d / f"{stem}.dat", header, rows)]


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]

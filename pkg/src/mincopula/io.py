"""Plain-text file formats: arrays, samples, solver traces and run summaries."""
from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .prob_array import GridShape

_HEADER = re.compile(r"#\s*d\s*=\s*(\d+)\s+n\s*=\s*(\d+)\s*$")


def format_float(x: float) -> str:
    # 17 significant digits round-trip every float64 exactly.
    return format(float(x), ".17g")


def write_array(path, values: np.ndarray) -> None:
    """Write an ``(n,) * d`` array: two header lines then one value per line."""
    values = np.asarray(values, dtype=np.float64)
    shape = GridShape(values.ndim, values.shape[0])
    if values.shape != shape.dims:
        raise ShapeError(f"array must have equal axis lengths, got {values.shape}")
    lines = [f"# d={shape.d} n={shape.n}", "# order=row-major"]
    lines.extend(format_float(x) for x in values.reshape(-1))
    Path(path).write_text("\n".join(lines) + "\n")


def read_array(path) -> np.ndarray:
    """Read an array written by :func:`write_array` (any finite reals accepted)."""
    text = Path(path).read_text().splitlines()
    if len(text) < 2:
        raise ShapeError(f"{path}: missing header")
    m = _HEADER.match(text[0].strip())
    if not m:
        raise ShapeError(f"{path}:1: expected '# d=<d> n=<n>', got {text[0]!r}")
    if text[1].strip().replace(" ", "") != "#order=row-major":
        raise ShapeError(f"{path}:2: expected '# order=row-major', got {text[1]!r}")
    shape = GridShape(int(m.group(1)), int(m.group(2)))
    values = []
    for lineno, line in enumerate(text[2:], start=3):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ShapeError(f"{path}:{lineno}: not a number: {line!r}") from None
    if len(values) != shape.cells:
        raise ShapeError(f"{path}: expected {shape.cells} values, found {len(values)}")
    return np.array(values, dtype=np.float64).reshape(shape.dims)


def write_samples(path, points: np.ndarray) -> None:
    points = np.atleast_2d(points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"v{k + 1}" for k in range(points.shape[1])])
        for row in points:
            writer.writerow([format_float(x) for x in row])


def write_trace(path, report) -> None:
    """Per-cycle trace: ``cycle,max_abs_change,<residual columns>``."""
    names = list(report.constraint_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "max_abs_change", *names])
        for rec in report.trace:
            row = [rec.cycle, format_float(rec.max_abs_change)]
            row.extend(format_float(rec.residuals[k]) if rec.residuals else "" for k in names)
            writer.writerow(row)

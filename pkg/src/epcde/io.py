"""CSV readers and writers for datasets, evaluated grids and study outputs."""

import math

import numpy as np

from .estimator import SamplePairs

__all__ = ["ParseError", "read_dataset", "write_dataset", "write_grid", "read_grid", "write_rows", "fmt"]


class ParseError(ValueError):
    """Malformed input file; the message names the offending line."""


def fmt(value):
    """17 significant digits: enough for a lossless float round trip."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _parse_float(text, lineno, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {lineno}: {name}={text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(f"line {lineno}: {name} must be finite")
    return value


def read_dataset(path):
    """Read a ``y,x`` CSV; an optional ``# design: fixed|random`` comment sets the kind."""
    kind = "unknown"
    ys, xs = [], []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("design:"):
                    kind = body.split(":", 1)[1].strip().lower()
                    if kind not in ("fixed", "random"):
                        raise ParseError(f"line {lineno}: unknown design kind {kind!r}")
                continue
            if not header_seen:
                if [c.strip() for c in line.split(",")] != ["y", "x"]:
                    raise ParseError(f"line {lineno}: expected header 'y,x'")
                header_seen = True
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise ParseError(f"line {lineno}: expected 2 columns, got {len(cells)}")
            y = _parse_float(cells[0].strip(), lineno, "y")
            x = _parse_float(cells[1].strip(), lineno, "x")
            if not 0.0 <= x <= 1.0:
                raise ParseError(f"line {lineno}: x={x} outside [0, 1]")
            ys.append(y)
            xs.append(x)
    if not header_seen:
        raise ParseError("missing header 'y,x'")
    if not ys:
        raise ParseError("no data rows")
    return SamplePairs(y=np.array(ys), x=np.array(xs), kind=kind)


def write_dataset(path, data):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if data.kind in ("fixed", "random"):
            fh.write(f"# design: {data.kind}\n")
        fh.write("y,x\n")
        for y, x in zip(data.y, data.x):
            fh.write(f"{fmt(y)},{fmt(x)}\n")


def write_grid(path, y_grid, x_grid, values, meta):
    """Write ``y,x,fhat`` rows (y outer, x inner) after ``# key: value`` lines."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(y_grid), len(x_grid)):
        raise ValueError("values must have shape (len(y_grid), len(x_grid))")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {value}\n")
        fh.write("y,x,fhat\n")
        for i, y in enumerate(y_grid):
            for j, x in enumerate(x_grid):
                fh.write(f"{fmt(y)},{fmt(x)},{fmt(values[i, j])}\n")


def read_grid(path):
    """Inverse of :func:`write_grid`: ``(y_grid, x_grid, values, meta)``."""
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = iter(enumerate(fh, start=1))
        for lineno, line in lines:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if line.strip() != "y,x,fhat":
                raise ParseError(f"line {lineno}: expected header 'y,x,fhat'")
            break
        for lineno, line in lines:
            if not line.strip():
                continue
            cells = line.split(",")
            if len(cells) != 3:
                raise ParseError(f"line {lineno}: expected 3 columns")
            rows.append([_parse_float(c, lineno, name) for c, name in zip(cells, ("y", "x", "fhat"))])
    arr = np.array(rows)
    if arr.size == 0:
        raise ParseError("no grid rows")
    y_grid = np.unique(arr[:, 0])
    x_grid = np.unique(arr[:, 1])
    if arr.shape[0] != y_grid.size * x_grid.size:
        raise ParseError("grid is incomplete or has duplicate cells")
    iy = np.searchsorted(y_grid, arr[:, 0])
    ix = np.searchsorted(x_grid, arr[:, 1])
    values = np.full((y_grid.size, x_grid.size), np.nan)
    values[iy, ix] = arr[:, 2]
    if np.isnan(values).any():
        raise ParseError("grid is incomplete or has duplicate cells")
    return y_grid, x_grid, values, meta


def write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if not isinstance(v, str) else v for v in row) + "\n")

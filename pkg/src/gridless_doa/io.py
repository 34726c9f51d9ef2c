"""Plain-text readers and writers for geometries, snapshots and matrices."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParseError


def _data_lines(path):
    """Yield ``(line_number, fields)`` for non-blank, non-comment lines."""
    with open(path) as fh:
        for number, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                yield number, text.split()


def _floats(path, number, fields):
    try:
        return [float(f) for f in fields]
    except ValueError:
        raise ParseError(path, number, f"expected numbers, got {' '.join(fields)!r}") from None


def read_real_column(path) -> np.ndarray:
    """One real number per line."""
    values = []
    for number, fields in _data_lines(path):
        if len(fields) != 1:
            raise ParseError(path, number, f"expected one value per line, got {len(fields)}")
        values.extend(_floats(path, number, fields))
    if not values:
        raise ParseError(path, None, "no data lines")
    return np.array(values)


def read_complex_column(path) -> np.ndarray:
    """One ``re im`` pair per line."""
    values = []
    for number, fields in _data_lines(path):
        if len(fields) != 2:
            raise ParseError(path, number, f"expected 're im', got {len(fields)} fields")
        re, im = _floats(path, number, fields)
        values.append(complex(re, im))
    if not values:
        raise ParseError(path, None, "no data lines")
    return np.array(values, dtype=complex)


def write_complex_column(path, values, header: str | None = None) -> None:
    values = np.asarray(values, dtype=complex).reshape(-1)
    lines = [f"# {header}"] if header else []
    lines += [f"{float(v.real)!r} {float(v.imag)!r}" for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_complex_matrix(path) -> np.ndarray:
    """Matrix file: header ``rows cols`` then ``re im`` pairs, row-major.

    Pairs may be spread over lines in any way; one matrix row per line is
    what :func:`write_complex_matrix` produces.
    """
    lines = iter(_data_lines(path))
    try:
        number, header = next(lines)
    except StopIteration:
        raise ParseError(path, None, "empty matrix file") from None
    if len(header) != 2:
        raise ParseError(path, number, "header must be 'N N_v'")
    try:
        rows, cols = (int(h) for h in header)
    except ValueError:
        raise ParseError(path, number, "header must hold two integers") from None
    if rows < 1 or cols < 1:
        raise ParseError(path, number, "matrix dimensions must be positive")
    values = []
    for number, fields in lines:
        if len(fields) % 2:
            raise ParseError(path, number, "odd number of fields, expected 're im' pairs")
        values.extend(_floats(path, number, fields))
    if len(values) != 2 * rows * cols:
        raise ParseError(path, None,
                         f"expected {rows * cols} complex entries, found {len(values) // 2}")
    flat = np.array(values).reshape(-1, 2)
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(rows, cols)


def write_complex_matrix(path, matrix) -> None:
    m = np.asarray(matrix, dtype=complex)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    for row in m:
        lines.append(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def append_jsonl(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]

"""Matrix Market coordinate-format reader and writer."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedError
from .tile_format import ElementCOO

_FIELDS = ("real", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric")


def _parse_banner(line: str) -> tuple[str, str]:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket":
        raise ParseError(f"bad banner line: {line.strip()!r}")
    obj, fmt, field, symmetry = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise UnsupportedError(f"object {obj!r} is not supported")
    if fmt == "array":
        raise UnsupportedError("array format is not supported")
    if fmt != "coordinate":
        raise ParseError(f"unknown format {fmt!r}")
    if field == "complex":
        raise UnsupportedError("complex matrices are not supported")
    if field not in _FIELDS:
        raise ParseError(f"unknown field {field!r}")
    if symmetry not in _SYMMETRIES:
        if symmetry in ("skew-symmetric", "hermitian"):
            raise UnsupportedError(f"symmetry {symmetry!r} is not supported")
        raise ParseError(f"unknown symmetry {symmetry!r}")
    return field, symmetry


def parse_matrix_market(text: str) -> ElementCOO:
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file")
    field, symmetry = _parse_banner(lines[0])

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise ParseError("missing size line")
    try:
        rows, cols, nnz = (int(t) for t in lines[i].split())
    except ValueError:
        raise ParseError(f"bad size line: {lines[i]!r}") from None
    if rows < 0 or cols < 0 or nnz < 0:
        raise ParseError("negative size")
    if symmetry == "symmetric" and rows != cols:
        raise ParseError("symmetric matrix must be square")

    body = [ln for ln in lines[i + 1:] if ln.strip() and not ln.lstrip().startswith("%")]
    width = 2 if field == "pattern" else 3
    if len(body) != nnz:
        raise ParseError(f"expected {nnz} entries, found {len(body)}")
    tokens = " ".join(body).split()
    if len(tokens) != nnz * width:
        raise ParseError("entry lines have the wrong number of fields")
    try:
        data = np.array(tokens, dtype=np.float64).reshape(nnz, width)
    except ValueError:
        raise ParseError("non-numeric entry") from None

    idx = data[:, :2]
    if not np.all(idx == np.floor(idx)):
        raise ParseError("non-integer index")
    row = idx[:, 0].astype(np.int64) - 1
    col = idx[:, 1].astype(np.int64) - 1
    if nnz and (row.min() < 0 or col.min() < 0 or row.max() >= rows or col.max() >= cols):
        raise ParseError("entry index out of range")
    val = np.ones(nnz) if field == "pattern" else data[:, 2].copy()
    if field == "integer" and not np.all(val == np.floor(val)):
        raise ParseError("non-integer value in integer matrix")

    if symmetry == "symmetric":
        off = row != col
        row, col, val = (
            np.concatenate((row, col[off])),
            np.concatenate((col, row[off])),
            np.concatenate((val, val[off])),
        )
    return ElementCOO.from_arrays(rows, cols, row, col, val)


def read_matrix_market(path) -> ElementCOO:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as e:
        raise ParseError(f"not a text file: {e}") from None
    return parse_matrix_market(text)


def write_matrix_market(m: ElementCOO, path, field: str = "real") -> None:
    """Write a general coordinate file; ``field="pattern"`` drops values."""
    out = [f"%%MatrixMarket matrix coordinate {field} general", f"{m.rows} {m.cols} {m.nnz}"]
    if field == "pattern":
        out += [f"{r + 1} {c + 1}" for r, c in zip(m.row.tolist(), m.col.tolist())]
    else:
        out += [f"{r + 1} {c + 1} {v!r}" for r, c, v in m.entries()]
    Path(path).write_text("\n".join(out) + "\n")

"""Bitmap-tiled sparse matrices.

A matrix is cut into an 8x8 grid. Only blocks holding at least one nonzero
are stored, each as a ``(tile_row, tile_col, elem_index, bitmap)`` record plus
its nonzero values in a shared element array. Bit ``8*r + c`` of the 64-bit
bitmap (LSB first) marks element ``(r, c)`` of the tile; the tile's values sit
contiguously at ``elements[elem_index:]`` in ascending bit order, so the value
of bit ``b`` lives at ``elem_index + popcount(bitmap & ((1 << b) - 1))``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import FormatError, InvariantError

TILE = 8
TILE_ELEMS = TILE * TILE
HALF_MAX = 65504.0

KINDS = ("fp16", "fp32")
_DTYPES = {"fp16": np.float16, "fp32": np.float32}

# bit index -> shift amount, as uint64 for vectorised bit extraction
BIT_SHIFTS = np.arange(TILE_ELEMS, dtype=np.uint64)


def round_to_half(x):
    """Round to the nearest binary16 value (ties to even), returned as float64.

    Accepts a scalar or an array. Raises ``OverflowError`` when a magnitude
    exceeds 65504 and ``ValueError`` for NaN or infinite input.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("round_to_half requires finite input")
    if arr.size and np.max(np.abs(arr)) > HALF_MAX:
        raise OverflowError(
            f"value {np.max(np.abs(arr))!r} outside the binary16 finite range (|x| <= {HALF_MAX})"
        )
    out = arr.astype(np.float16).astype(np.float64)
    if out.ndim == 0:
        return float(out)
    return out


def popcount(bitmaps) -> np.ndarray:
    return np.bitwise_count(np.asarray(bitmaps, dtype=np.uint64)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class ElementCOO:
    """Element-level coordinate matrix with sorted, duplicate-free entries."""

    rows: int
    cols: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row", np.ascontiguousarray(self.row, dtype=np.int64))
        object.__setattr__(self, "col", np.ascontiguousarray(self.col, dtype=np.int64))
        object.__setattr__(self, "val", np.ascontiguousarray(self.val, dtype=np.float64))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "ElementCOO":
        z = np.zeros(0, dtype=np.int64)
        return cls(rows, cols, z, z, np.zeros(0))

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries) -> "ElementCOO":
        entries = list(entries)
        if not entries:
            return cls.empty(rows, cols)
        r, c, v = zip(*entries)
        m = cls(rows, cols, np.array(r), np.array(c), np.array(v, dtype=np.float64))
        m.validate()
        return m

    @classmethod
    def from_arrays(cls, rows: int, cols: int, row, col, val, *, sum_duplicates: bool = True) -> "ElementCOO":
        """Build from unsorted triplets, sorting and (optionally) summing duplicates."""
        row = np.asarray(row, dtype=np.int64)
        col = np.asarray(col, dtype=np.int64)
        val = np.asarray(val, dtype=np.float64)
        order = np.lexsort((col, row))
        row, col, val = row[order], col[order], val[order]
        if row.size and sum_duplicates:
            new = np.ones(row.size, dtype=bool)
            new[1:] = (row[1:] != row[:-1]) | (col[1:] != col[:-1])
            starts = np.flatnonzero(new)
            val = np.add.reduceat(val, starts)
            row, col = row[starts], col[starts]
        m = cls(rows, cols, row, col, val)
        m.validate()
        return m

    @classmethod
    def from_dense(cls, dense) -> "ElementCOO":
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @property
    def nnz(self) -> int:
        return int(self.val.size)

    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row.tolist(), self.col.tolist(), self.val.tolist()))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row, self.col] = self.val
        return out

    def validate(self) -> None:
        if not (self.row.size == self.col.size == self.val.size):
            raise InvariantError("row/col/val lengths differ")
        if self.row.size == 0:
            return
        if self.row.min() < 0 or self.col.min() < 0 or self.row.max() >= self.rows or self.col.max() >= self.cols:
            raise InvariantError("entry index outside matrix bounds")
        dr = np.diff(self.row)
        dc = np.diff(self.col)
        if np.any((dr < 0) | ((dr == 0) & (dc <= 0))):
            raise InvariantError("entries not strictly sorted by (row, col)")

    def equals(self, other: "ElementCOO") -> bool:
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.row, other.row)
            and np.array_equal(self.col, other.col)
            and np.array_equal(self.val, other.val)
        )


class TileEntry(NamedTuple):
    tile_row: int
    tile_col: int
    elem_index: int
    bitmap: int


@dataclass(frozen=True, eq=False)
class Tile8:
    """Dense 8x8 scratch tile. ``kind`` is one of boolean, half, accumulator."""

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("boolean", "half", "accumulator"):
            raise ValueError(f"unknown tile kind {self.kind!r}")
        dtype = {"boolean": np.uint8, "half": np.float32, "accumulator": np.float32}[self.kind]
        data = np.array(self.data, dtype=dtype).reshape(TILE, TILE)
        if self.kind == "boolean" and np.any(data > 1):
            raise ValueError("boolean tile holds values other than 0/1")
        if self.kind == "half" and not np.array_equal(data, data.astype(np.float16).astype(np.float32)):
            raise ValueError("half tile holds values not representable in binary16")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, kind: str) -> "Tile8":
        return cls(kind, np.zeros((TILE, TILE)))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def bitmap_of_dense_tile(t) -> int:
    """64-bit occupancy mask of a dense 8x8 tile."""
    flat = np.asarray(t).reshape(TILE_ELEMS) != 0
    return int(np.bitwise_or.reduce(np.where(flat, np.uint64(1) << BIT_SHIFTS, np.uint64(0))))


def edge_mask(rows: int, cols: int, tile_row, tile_col) -> np.ndarray:
    """Per-tile mask of the slots that fall inside a ``rows x cols`` matrix."""
    tile_row = np.asarray(tile_row, dtype=np.int64)
    tile_col = np.asarray(tile_col, dtype=np.int64)
    nr = np.clip(rows - TILE * tile_row, 0, TILE)
    nc = np.clip(cols - TILE * tile_col, 0, TILE)
    r = np.arange(TILE)
    inside = (r[None, :, None] < nr[:, None, None]) & (r[None, None, :] < nc[:, None, None])
    inside = inside.reshape(-1, TILE_ELEMS)
    return np.bitwise_or.reduce(
        np.where(inside, np.uint64(1) << BIT_SHIFTS, np.uint64(0)), axis=1
    ).astype(np.uint64)


@dataclass(frozen=True, eq=False)
class TiledMatrix:
    rows: int
    cols: int
    tile_row: np.ndarray
    tile_col: np.ndarray
    elem_index: np.ndarray
    bitmap: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tile_row", np.ascontiguousarray(self.tile_row, dtype=np.uint32))
        object.__setattr__(self, "tile_col", np.ascontiguousarray(self.tile_col, dtype=np.uint32))
        object.__setattr__(self, "elem_index", np.ascontiguousarray(self.elem_index, dtype=np.int64))
        object.__setattr__(self, "bitmap", np.ascontiguousarray(self.bitmap, dtype=np.uint64))
        if self.elements.dtype not in (np.float16, np.float32):
            raise InvariantError(f"element dtype must be float16 or float32, got {self.elements.dtype}")
        for a in (self.tile_row, self.tile_col, self.elem_index, self.bitmap, self.elements):
            a.flags.writeable = False

    @classmethod
    def empty(cls, rows: int, cols: int, kind: str = "fp16") -> "TiledMatrix":
        z = np.zeros(0)
        return cls(rows, cols, z, z, z, z, np.zeros(0, dtype=_DTYPES[kind]))

    @property
    def kind(self) -> str:
        return "fp16" if self.elements.dtype == np.float16 else "fp32"

    @property
    def tile_rows(self) -> int:
        return -(-self.rows // TILE)

    @property
    def tile_cols(self) -> int:
        return -(-self.cols // TILE)

    @property
    def num_tiles(self) -> int:
        return int(self.bitmap.size)

    @property
    def nnz(self) -> int:
        return int(self.elements.size)

    def tiles(self) -> Iterator[TileEntry]:
        for t in zip(self.tile_row.tolist(), self.tile_col.tolist(),
                     self.elem_index.tolist(), self.bitmap.tolist()):
            yield TileEntry(*t)

    def validate(self) -> None:
        n = self.bitmap.size
        if not (self.tile_row.size == self.tile_col.size == self.elem_index.size == n):
            raise InvariantError("tile arrays have different lengths")
        if self.rows < 0 or self.cols < 0:
            raise InvariantError("negative dimensions")
        pop = popcount(self.bitmap)
        if int(pop.sum()) != self.elements.size:
            raise InvariantError(
                f"sum of popcounts {int(pop.sum())} != element count {self.elements.size}"
            )
        if n == 0:
            return
        if np.any(self.bitmap == 0):
            raise InvariantError("tile with empty bitmap")
        if self.tile_row.max() >= self.tile_rows or self.tile_col.max() >= self.tile_cols:
            raise InvariantError("tile coordinate outside the tile grid")
        tr = self.tile_row.astype(np.int64)
        tc = self.tile_col.astype(np.int64)
        dr, dc = np.diff(tr), np.diff(tc)
        if np.any((dr < 0) | ((dr == 0) & (dc <= 0))):
            raise InvariantError("tiles not strictly sorted by (tile_row, tile_col)")
        expected = np.concatenate(([0], np.cumsum(pop)[:-1]))
        if not np.array_equal(self.elem_index, expected):
            raise InvariantError("elem_index is not the running popcount sum")
        if np.any(self.bitmap & ~edge_mask(self.rows, self.cols, tr, tc)):
            raise InvariantError("bitmap marks slots outside the matrix")
        if not np.all(np.isfinite(self.elements)):
            raise InvariantError("non-finite stored element")
        if np.any(self.elements == 0):
            raise InvariantError("stored element equal to zero")

    def equals(self, other: "TiledMatrix") -> bool:
        """Structural and bitwise value equality (element kind included)."""
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and self.elements.dtype == other.elements.dtype
            and np.array_equal(self.tile_row, other.tile_row)
            and np.array_equal(self.tile_col, other.tile_col)
            and np.array_equal(self.elem_index, other.elem_index)
            and np.array_equal(self.bitmap, other.bitmap)
            and np.array_equal(self.elements.view(np.uint8), other.elements.view(np.uint8))
        )

    def to_dense(self) -> np.ndarray:
        return to_element_coo(self).to_dense()

    def astype(self, kind: str) -> "TiledMatrix":
        if kind == self.kind:
            return self
        return from_element_coo(to_element_coo(self), kind=kind)


def from_element_coo(m: ElementCOO, kind: str = "fp16", drop_nonfinite: bool = False) -> TiledMatrix:
    """Tile an element-level matrix, keeping only nonempty 8x8 blocks.

    With ``kind="fp16"`` values are rounded to binary16 first; values that round
    to zero are discarded along with explicit zeros.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    row, col, val = m.row, m.col, m.val
    finite = np.isfinite(val)
    if not finite.all():
        if not drop_nonfinite:
            raise ValueError("matrix contains non-finite values")
        row, col, val = row[finite], col[finite], val[finite]
    if kind == "fp16":
        val = round_to_half(val)
    keep = val != 0
    row, col, val = row[keep], col[keep], val[keep]

    tr, tc = row // TILE, col // TILE
    bit = (row % TILE) * TILE + col % TILE
    order = np.lexsort((bit, tc, tr))
    tr, tc, bit, val = tr[order], tc[order], bit[order], val[order]

    if val.size == 0:
        return TiledMatrix.empty(m.rows, m.cols, kind)
    new = np.ones(val.size, dtype=bool)
    new[1:] = (tr[1:] != tr[:-1]) | (tc[1:] != tc[:-1])
    starts = np.flatnonzero(new)
    bitmap = np.bitwise_or.reduceat(np.uint64(1) << bit.astype(np.uint64), starts)
    return TiledMatrix(
        m.rows, m.cols, tr[starts], tc[starts], starts, bitmap,
        val.astype(_DTYPES[kind]),
    )


def to_element_coo(m: TiledMatrix) -> ElementCOO:
    if m.num_tiles == 0:
        return ElementCOO.empty(m.rows, m.cols)
    bits = ((m.bitmap[:, None] >> BIT_SHIFTS) & np.uint64(1)).astype(bool)
    t, b = np.nonzero(bits)  # tile-major, ascending bit: the element-array order
    row = m.tile_row.astype(np.int64)[t] * TILE + b // TILE
    col = m.tile_col.astype(np.int64)[t] * TILE + b % TILE
    val = m.elements.astype(np.float64)
    order = np.lexsort((col, row))
    return ElementCOO(m.rows, m.cols, row[order], col[order], val[order])


def expand_tiles(m: TiledMatrix, idx) -> np.ndarray:
    """Dense float32 copies, shape ``(len(idx), 8, 8)``, of the tiles at ``idx``."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((idx.size, TILE_ELEMS), dtype=np.float32)
    if idx.size:
        bits = ((m.bitmap[idx][:, None] >> BIT_SHIFTS) & np.uint64(1)).astype(bool)
        slot = m.elem_index[idx][:, None] + np.cumsum(bits, axis=1) - 1
        out[bits] = m.elements[slot[bits]]
    return out.reshape(-1, TILE, TILE)


# --- tiled binary format -------------------------------------------------------

MAGIC = b"TSPZ"
VERSION = 1
_HEADER = struct.Struct("<4sIBQQQQ")
_KIND_CODE = {"fp16": 0, "fp32": 1}


def tiled_binary_bytes(m: TiledMatrix) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, _KIND_CODE[m.kind], m.rows, m.cols, m.num_tiles, m.nnz)
    elems = m.elements.astype("<f2").view("<u2") if m.kind == "fp16" else m.elements.astype("<f4")
    return b"".join((
        header,
        m.tile_row.astype("<u4").tobytes(),
        m.tile_col.astype("<u4").tobytes(),
        m.bitmap.astype("<u8").tobytes(),
        m.elem_index.astype("<u8").tobytes(),
        elems.tobytes(),
    ))


def write_tiled_binary(m: TiledMatrix, path) -> None:
    Path(path).write_bytes(tiled_binary_bytes(m))


def parse_tiled_binary(buf: bytes) -> TiledMatrix:
    if len(buf) < _HEADER.size:
        raise FormatError("file shorter than the header")
    magic, version, kind_code, rows, cols, ntiles, nelem = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if kind_code not in (0, 1):
        raise FormatError(f"unknown element kind {kind_code}")
    esize = 2 if kind_code == 0 else 4
    need = _HEADER.size + ntiles * (4 + 4 + 8 + 8) + nelem * esize
    if len(buf) != need:
        raise FormatError(f"expected {need} bytes, found {len(buf)}")
    off = _HEADER.size

    def take(dtype, count):
        nonlocal off
        a = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
        off += a.nbytes
        return a

    tile_row = take("<u4", ntiles)
    tile_col = take("<u4", ntiles)
    bitmap = take("<u8", ntiles)
    elem_index = take("<u8", ntiles)
    if kind_code == 0:
        elements = take("<u2", nelem).view("<f2").astype(np.float16)
    else:
        elements = take("<f4", nelem).astype(np.float32)
    if ntiles and elem_index.max() > np.iinfo(np.int64).max:
        raise InvariantError("elem_index out of range")
    m = TiledMatrix(rows, cols, tile_row, tile_col, elem_index.astype(np.int64), bitmap, elements)
    m.validate()
    return m


def read_tiled_binary(path) -> TiledMatrix:
    return parse_tiled_binary(Path(path).read_bytes())

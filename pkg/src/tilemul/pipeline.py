"""Task-list construction: pair enumeration, zero-product culling, sorting and
segmentation of (A-tile, B-tile) multiplicand pairs by output tile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tile_format import TILE, TiledMatrix

_U64 = np.uint64
_BYTE_LSB = _U64(0x0101010101010101)
_BYTE = _U64(0xFF)


@dataclass(frozen=True, eq=False)
class TaskList:
    """Sorted tile pairs, one contiguous segment per output tile.

    Segment ``s`` covers ``a_tile[seg_offsets[s]:seg_offsets[s+1]]`` (and the
    same slice of ``b_tile``) and produces output tile ``(out_row[s], out_col[s])``.
    ``raw_pairs`` is the pair count before zero-product filtering.
    """

    a_tile: np.ndarray
    b_tile: np.ndarray
    seg_offsets: np.ndarray
    out_row: np.ndarray
    out_col: np.ndarray
    raw_pairs: int

    @property
    def num_pairs(self) -> int:
        return int(self.a_tile.size)

    @property
    def num_output_tiles(self) -> int:
        return int(self.out_row.size)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.a_tile.tolist(), self.b_tile.tolist()))

    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.seg_offsets)

    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.a_tile, self.b_tile, self.seg_offsets, self.out_row, self.out_col))


def _row_pointers(m: TiledMatrix) -> np.ndarray:
    # tiles are sorted by tile_row, so each tile row is a contiguous run
    return np.searchsorted(m.tile_row.astype(np.int64), np.arange(m.tile_rows + 1), side="left")


def enumerate_pairs(A: TiledMatrix, B: TiledMatrix) -> tuple[np.ndarray, np.ndarray]:
    """All ``(a, b)`` with ``tile_col(a) == tile_row(b)``, in A-tile order then B-tile order."""
    if A.cols != B.rows:
        raise DimensionError(f"inner dimensions differ: A is {A.rows}x{A.cols}, B is {B.rows}x{B.cols}")
    ptr = _row_pointers(B)
    k = A.tile_col.astype(np.int64)
    counts = ptr[k + 1] - ptr[k]
    total = int(counts.sum())
    a_idx = np.repeat(np.arange(A.num_tiles, dtype=np.int64), counts)
    run_start = np.repeat(np.cumsum(counts) - counts, counts)
    b_idx = np.repeat(ptr[k], counts) + (np.arange(total, dtype=np.int64) - run_start)
    return a_idx, b_idx


def boolean_tile_mm(bA, bB):
    """Bitmap of the boolean product of two 8x8 occupancy masks.

    Column ``k`` of A, spread one bit per byte, times row ``k`` of B places that
    row in every output row where A has a ``k`` entry; bytes never carry.
    """
    a = np.asarray(bA, dtype=_U64)
    b = np.asarray(bB, dtype=_U64)
    out = np.zeros(np.broadcast(a, b).shape, dtype=_U64)
    for k in range(TILE):
        out |= ((a >> _U64(k)) & _BYTE_LSB) * ((b >> _U64(TILE * k)) & _BYTE)
    return int(out) if out.ndim == 0 else out


def occupied_columns(bitmaps) -> np.ndarray:
    """8-bit mask: bit k set iff column k of the tile holds a nonzero."""
    x = np.asarray(bitmaps, dtype=_U64)
    x = x | (x >> _U64(32))
    x = x | (x >> _U64(16))
    x = x | (x >> _U64(8))
    return x & _BYTE


def occupied_rows(bitmaps) -> np.ndarray:
    """8-bit mask: bit k set iff row k of the tile holds a nonzero."""
    x = np.asarray(bitmaps, dtype=_U64)
    out = np.zeros(x.shape, dtype=_U64)
    for k in range(TILE):
        out |= (((x >> _U64(TILE * k)) & _BYTE) != 0).astype(_U64) << _U64(k)
    return out


def zero_product_mask(bA, bB) -> np.ndarray:
    """True where the boolean tile product is nonzero (shared occupied inner index)."""
    return (occupied_columns(bA) & occupied_rows(bB)) != 0


def filter_zero_products(a_idx, b_idx, A: TiledMatrix, B: TiledMatrix) -> tuple[np.ndarray, np.ndarray]:
    keep = zero_product_mask(A.bitmap[a_idx], B.bitmap[b_idx])
    return a_idx[keep], b_idx[keep]


def sort_and_segment(a_idx, b_idx, A: TiledMatrix, B: TiledMatrix, raw_pairs: int | None = None) -> TaskList:
    a_idx = np.asarray(a_idx, dtype=np.int64)
    b_idx = np.asarray(b_idx, dtype=np.int64)
    out_row = A.tile_row.astype(np.int64)[a_idx]
    out_col = B.tile_col.astype(np.int64)[b_idx]
    inner = A.tile_col.astype(np.int64)[a_idx]

    # stable passes, least significant key first: inner k, then B column, then A row
    order = np.argsort(inner, kind="stable")
    order = order[np.argsort(out_col[order], kind="stable")]
    order = order[np.argsort(out_row[order], kind="stable")]
    a_idx, b_idx = a_idx[order], b_idx[order]
    out_row, out_col = out_row[order], out_col[order]

    n = a_idx.size
    head = np.ones(n, dtype=bool)
    head[1:] = (out_row[1:] != out_row[:-1]) | (out_col[1:] != out_col[:-1])
    starts = np.flatnonzero(head)
    # segmented reduce of unit weights, then prefix sum into offsets
    seg_counts = np.add.reduceat(np.ones(n, dtype=np.int64), starts) if n else np.zeros(0, dtype=np.int64)
    seg_offsets = np.concatenate(([0], np.cumsum(seg_counts))).astype(np.int64)
    return TaskList(
        a_idx, b_idx, seg_offsets, out_row[starts], out_col[starts],
        n if raw_pairs is None else int(raw_pairs),
    )


def build_task_list(A: TiledMatrix, B: TiledMatrix) -> TaskList:
    a_idx, b_idx = enumerate_pairs(A, B)
    raw = a_idx.size
    a_idx, b_idx = filter_zero_products(a_idx, b_idx, A, B)
    return sort_and_segment(a_idx, b_idx, A, B, raw)

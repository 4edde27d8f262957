"""Counting and multiplication passes over a task list.

Tile products use binary16 inputs held in float32 (every binary16 x binary16
product is exact there) and accumulate into float32, one product at a time,
with the inner index ascending. Segments are processed pair by pair in task
list order, which fixes the summation order and makes results reproducible
independent of how segments are spread over workers.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, PrecisionError
from .pipeline import TaskList, boolean_tile_mm, build_task_list, enumerate_pairs, filter_zero_products, sort_and_segment
from .tile_format import BIT_SHIFTS, TILE, TILE_ELEMS, TiledMatrix, expand_tiles, popcount

# segments per work unit; bounds scratch memory at ~BLOCK * 1 KiB
BLOCK = 1 << 14


def tile_mm_reference(a, b, c):
    """``c + a @ b`` for 8x8 tiles (or stacks of them), fp32 accumulate, k ascending.

    ``a`` and ``b`` must hold binary16-representable values. Returns a new array.
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    c = np.array(c, dtype=np.float32, copy=True)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(TILE):
            c += a[..., :, k, None] * b[..., None, k, :]
    return c


def embed_diagonal(t0, t1) -> np.ndarray:
    t0 = np.asarray(t0, dtype=np.float32)
    t1 = np.asarray(t1, dtype=np.float32)
    shape = np.broadcast_shapes(t0.shape, t1.shape)[:-2]
    out = np.zeros(shape + (2 * TILE, 2 * TILE), dtype=np.float32)
    out[..., :TILE, :TILE] = t0
    out[..., TILE:, TILE:] = t1
    return out


def paired_tile_mm_full(a0, b0, a1, b1, c0, c1) -> np.ndarray:
    """The 16x16 accumulator after multiplying the two diagonal embeddings."""
    a = embed_diagonal(a0, a1)
    b = embed_diagonal(b0, b1)
    c = embed_diagonal(c0, c1)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(2 * TILE):
            c += a[..., :, k, None] * b[..., None, k, :]
    return c


def paired_tile_mm(a0, b0, a1, b1, c0, c1):
    """Two independent tile products computed as one 16x16 product.

    Pass zero tiles for a job that has run out of work; its accumulator is
    left unchanged.
    """
    c = paired_tile_mm_full(a0, b0, a1, b1, c0, c1)
    return c[..., :TILE, :TILE].copy(), c[..., TILE:, TILE:].copy()


@dataclass(frozen=True, eq=False)
class CountResult:
    per_tile_count: np.ndarray
    elem_offsets: np.ndarray
    seg_bitmap: np.ndarray  # OR of the boolean products of each segment

    @property
    def total_elements(self) -> int:
        return int(self.elem_offsets[-1])


@dataclass(frozen=True, eq=False)
class MulResult:
    rows: int
    cols: int
    out_row: np.ndarray
    out_col: np.ndarray
    elem_index: np.ndarray
    bitmap: np.ndarray
    elements: np.ndarray
    empty: np.ndarray

    def realized_counts(self) -> np.ndarray:
        return popcount(self.bitmap)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("TILEMUL_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _ranges(n: int, threads: int) -> list[tuple[int, int]]:
    """Contiguous even-aligned segment ranges, none longer than BLOCK."""
    if n == 0:
        return []
    per = -(-n // threads)
    per = min(BLOCK, per + (per & 1))
    return [(s, min(n, s + per)) for s in range(0, n, per)]


def _run(fn, ranges, threads: int) -> None:
    if threads == 1 or len(ranges) <= 1:
        for r in ranges:
            fn(*r)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for f in [pool.submit(fn, *r) for r in ranges]:
            f.result()


def counting_pass(A: TiledMatrix, B: TiledMatrix, tl: TaskList, threads: int | None = None) -> CountResult:
    """Upper bound on nonzeros per output tile from bitmaps alone."""
    threads = resolve_threads(threads)
    n = tl.num_output_tiles
    seg_bitmap = np.zeros(n, dtype=np.uint64)

    def work(s0, s1):
        lo, hi = tl.seg_offsets[s0], tl.seg_offsets[s1]
        prod = boolean_tile_mm(A.bitmap[tl.a_tile[lo:hi]], B.bitmap[tl.b_tile[lo:hi]])
        seg_bitmap[s0:s1] = np.bitwise_or.reduceat(prod, tl.seg_offsets[s0:s1] - lo)

    _run(work, _ranges(n, threads), threads)
    counts = popcount(seg_bitmap)
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    return CountResult(counts, offsets, seg_bitmap)


def _bitmaps_of(flat: np.ndarray) -> np.ndarray:
    bits = np.where(flat != 0, np.uint64(1) << BIT_SHIFTS, np.uint64(0))
    return np.bitwise_or.reduce(bits, axis=1).astype(np.uint64)


def multiply_pass(
    A: TiledMatrix,
    B: TiledMatrix,
    tl: TaskList,
    cr: CountResult,
    *,
    pairing: bool = True,
    threads: int | None = None,
) -> MulResult:
    if A.kind != "fp16" or B.kind != "fp16":
        raise ValueError("multiply_pass expects fp16-stored inputs")
    threads = resolve_threads(threads)
    n = tl.num_output_tiles
    lengths = tl.segment_lengths()
    starts = tl.seg_offsets[:-1]
    bitmap = np.zeros(n, dtype=np.uint64)
    elements = np.zeros(cr.total_elements, dtype=np.float32)

    def load(seg, p, mask):
        # dense scratch for pair p of each segment in seg where mask holds; zeros elsewhere
        a = np.zeros((seg.size, TILE, TILE), dtype=np.float32)
        b = np.zeros_like(a)
        pair = starts[seg[mask]] + p
        a[mask] = expand_tiles(A, tl.a_tile[pair])
        b[mask] = expand_tiles(B, tl.b_tile[pair])
        return a, b

    def accumulate_single(s0, s1):
        segs = np.arange(s0, s1)
        order = np.argsort(-lengths[segs], kind="stable")
        segs, lens = segs[order], lengths[segs][order]
        acc = np.zeros((segs.size, TILE, TILE), dtype=np.float32)
        for p in range(int(lens[0]) if lens.size else 0):
            m = int(np.count_nonzero(lens > p))
            a, b = load(segs[:m], p, np.ones(m, dtype=bool))
            acc[:m] = tile_mm_reference(a, b, acc[:m])
        out = np.empty_like(acc)
        out[order] = acc
        return out

    def accumulate_paired(s0, s1):
        left = np.arange(s0, s1, 2)
        right = left + 1
        has_right = right < s1
        len_l = lengths[left]
        len_r = np.where(has_right, lengths[np.minimum(right, s1 - 1)], 0)
        job_len = np.maximum(len_l, len_r)
        order = np.argsort(-job_len, kind="stable")
        left, right, len_l, len_r, job_len = left[order], right[order], len_l[order], len_r[order], job_len[order]
        c0 = np.zeros((left.size, TILE, TILE), dtype=np.float32)
        c1 = np.zeros_like(c0)
        for p in range(int(job_len[0]) if job_len.size else 0):
            m = int(np.count_nonzero(job_len > p))
            a0, b0 = load(left[:m], p, len_l[:m] > p)
            a1, b1 = load(np.minimum(right[:m], s1 - 1), p, len_r[:m] > p)
            c0[:m], c1[:m] = paired_tile_mm(a0, b0, a1, b1, c0[:m], c1[:m])
        out = np.empty((s1 - s0, TILE, TILE), dtype=np.float32)
        out[left - s0] = c0
        out[right[right < s1] - s0] = c1[right < s1]
        return out

    accumulate = accumulate_paired if pairing else accumulate_single
    failures = []

    def work(s0, s1):
        flat = accumulate(s0, s1).reshape(-1, TILE_ELEMS)
        if not np.all(np.isfinite(flat)):
            failures.append(s0 + int(np.flatnonzero(~np.isfinite(flat).all(axis=1))[0]))
            return
        nz = flat != 0
        bitmap[s0:s1] = _bitmaps_of(flat)
        slot = cr.elem_offsets[s0:s1, None] + np.cumsum(nz, axis=1) - 1
        elements[slot[nz]] = flat[nz]

    _run(work, _ranges(n, threads), threads)
    if failures:
        s = min(failures)
        raise PrecisionError(
            f"non-finite fp32 accumulator in output tile ({tl.out_row[s]}, {tl.out_col[s]})"
        )
    return MulResult(
        A.rows, B.cols, tl.out_row, tl.out_col, cr.elem_offsets[:-1].copy(),
        bitmap, elements, bitmap == 0,
    )


def compact(mr: MulResult) -> TiledMatrix:
    """Drop empty tiles and unused element slots; result is fp32-stored."""
    keep = ~mr.empty
    pop = popcount(mr.bitmap[keep])
    total = int(pop.sum())
    run_start = np.repeat(np.cumsum(pop) - pop, pop)
    src = np.repeat(mr.elem_index[keep], pop) + (np.arange(total) - run_start)
    return TiledMatrix(
        mr.rows, mr.cols, mr.out_row[keep], mr.out_col[keep],
        np.cumsum(pop) - pop, mr.bitmap[keep], mr.elements[src],
    )


@dataclass
class PhaseTiming:
    """Wall-clock seconds per phase. ``total`` also covers input downcasting."""

    task_list: float = 0.0
    sort: float = 0.0
    counting: float = 0.0
    multiply: float = 0.0
    compaction: float = 0.0
    total: float = 0.0

    FIELDS = ("taskList", "sort", "counting", "multiply", "compaction", "total")

    def to_dict(self) -> dict[str, float]:
        return dict(zip(self.FIELDS, (self.task_list, self.sort, self.counting,
                                      self.multiply, self.compaction, self.total)))


@dataclass
class SpgemmRun:
    """Output of one multiplication plus the intermediates needed for reporting."""

    result: TiledMatrix
    timing: PhaseTiming
    a: TiledMatrix
    b: TiledMatrix
    task_list: TaskList
    counts: CountResult
    product: MulResult
    threads: int
    pairing: bool
    _memory: object = field(default=None, repr=False)

    @property
    def memory(self):
        if self._memory is None:
            from .memory import memory_report
            self._memory = memory_report(self)
        return self._memory


def spgemm(A: TiledMatrix, B: TiledMatrix, *, pairing: bool = True, threads: int | None = None) -> SpgemmRun:
    threads = resolve_threads(threads)
    timing = PhaseTiming()
    t_start = time.perf_counter()
    same = B is A
    A = A.astype("fp16")
    B = A if same else B.astype("fp16")

    t = time.perf_counter()
    a_idx, b_idx = enumerate_pairs(A, B)
    raw = a_idx.size
    a_idx, b_idx = filter_zero_products(a_idx, b_idx, A, B)
    timing.task_list = time.perf_counter() - t

    t = time.perf_counter()
    tl = sort_and_segment(a_idx, b_idx, A, B, raw)
    timing.sort = time.perf_counter() - t

    t = time.perf_counter()
    cr = counting_pass(A, B, tl, threads)
    timing.counting = time.perf_counter() - t

    t = time.perf_counter()
    mr = multiply_pass(A, B, tl, cr, pairing=pairing, threads=threads)
    timing.multiply = time.perf_counter() - t

    t = time.perf_counter()
    C = compact(mr)
    timing.compaction = time.perf_counter() - t
    timing.total = time.perf_counter() - t_start
    return SpgemmRun(C, timing, A, B, tl, cr, mr, threads, pairing)


def spgemm_square(A: TiledMatrix, *, pairing: bool = True, threads: int | None = None) -> SpgemmRun:
    """``A @ A`` through the full pipeline; ``.result`` holds the fp32-stored product."""
    if A.rows != A.cols:
        raise DimensionError(f"A*A needs a square matrix, got {A.rows}x{A.cols}")
    return spgemm(A, A, pairing=pairing, threads=threads)


__all__ = [
    "CountResult", "MulResult", "PhaseTiming", "SpgemmRun", "build_task_list", "compact",
    "counting_pass", "multiply_pass", "paired_tile_mm", "paired_tile_mm_full", "spgemm",
    "spgemm_square", "tile_mm_reference",
]

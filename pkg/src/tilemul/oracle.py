"""Reference products and error metrics.

Everything here works on element-level COO and knows nothing about tiles, so
that it cannot inherit a bug from the tiled pipeline it is used to check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .tile_format import ElementCOO

# dense working arrays above this many cells switch the mixed oracle to the
# expand-and-sort route
DENSE_LIMIT = 1 << 22


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    rows: int
    cols: int
    data: np.ndarray  # row-major, length rows * cols

    @classmethod
    def from_coo(cls, m: ElementCOO, dtype=np.float64) -> "DenseMatrix":
        data = np.zeros(m.rows * m.cols, dtype=dtype)
        data[m.row * m.cols + m.col] = m.val
        return cls(m.rows, m.cols, data)

    def view(self) -> np.ndarray:
        return self.data.reshape(self.rows, self.cols)

    def to_coo(self) -> ElementCOO:
        return ElementCOO.from_dense(self.view())


def _check_dims(A: ElementCOO, B: ElementCOO) -> None:
    if A.cols != B.rows:
        raise DimensionError(f"inner dimensions differ: {A.rows}x{A.cols} times {B.rows}x{B.cols}")


def _csr(m: ElementCOO) -> sp.csr_matrix:
    out = sp.csr_matrix((m.val, (m.row, m.col)), shape=(m.rows, m.cols))
    out.sort_indices()
    return out


def dense_spgemm_fp64(A: ElementCOO, B: ElementCOO) -> ElementCOO:
    """Float64 product; each output sums ``a[i,k] * b[k,j]`` with k ascending.

    Row-by-row sparse accumulation (scipy's CSR kernel) realises the triple
    loop without the dense storage; exact zeros are dropped.
    """
    _check_dims(A, B)
    C = (_csr(A) @ _csr(B)).tocoo()
    keep = C.data != 0
    return ElementCOO.from_arrays(A.rows, B.cols, C.row[keep], C.col[keep], C.data[keep],
                                  sum_duplicates=False)


def _to_half32(val: np.ndarray) -> np.ndarray:
    if val.size and np.max(np.abs(val)) > 65504.0:
        raise OverflowError("value outside the binary16 finite range")
    return val.astype(np.float16).astype(np.float32)


def _mixed_dense(A: ElementCOO, B: ElementCOO) -> ElementCOO:
    a = np.zeros((A.rows, A.cols), dtype=np.float32)
    b = np.zeros((B.rows, B.cols), dtype=np.float32)
    a[A.row, A.col] = _to_half32(A.val)
    b[B.row, B.col] = _to_half32(B.val)
    c = np.zeros((A.rows, B.cols), dtype=np.float32)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(A.cols):
            # exact binary16 products, one fp32 rounding per addition
            c += a[:, k, None] * b[None, k, :]
    return ElementCOO.from_dense(c)


def _mixed_expand(A: ElementCOO, B: ElementCOO) -> ElementCOO:
    av = _to_half32(A.val)
    bv = _to_half32(B.val)
    # B rows are contiguous because entries are sorted by (row, col)
    b_ptr = np.searchsorted(B.row, np.arange(B.rows + 1))
    counts = b_ptr[A.col + 1] - b_ptr[A.col]
    total = int(counts.sum())
    ai = np.repeat(np.arange(A.nnz), counts)
    bi = np.repeat(b_ptr[A.col], counts) + np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    i, j, k = A.row[ai], B.col[bi], A.col[ai]
    prod = av[ai] * bv[bi]
    order = np.lexsort((k, j, i))
    i, j, prod = i[order], j[order], prod[order]
    if total == 0:
        return ElementCOO.empty(A.rows, B.cols)
    head = np.ones(total, dtype=bool)
    head[1:] = (i[1:] != i[:-1]) | (j[1:] != j[:-1])
    seg = np.cumsum(head) - 1
    start = np.flatnonzero(head)
    rank = np.arange(total) - start[seg]
    acc = np.zeros(start.size, dtype=np.float32)
    with np.errstate(over="ignore", invalid="ignore"):
        # one rank level at a time keeps each output's additions in k order
        for r in range(int(rank.max()) + 1):
            at = rank == r
            acc[seg[at]] += prod[at]
    keep = acc != 0
    return ElementCOO(A.rows, B.cols, i[start][keep], j[start][keep], acc[keep].astype(np.float64))


def dense_spgemm_mixed_ordered(A: ElementCOO, B: ElementCOO, method: str = "auto") -> ElementCOO:
    """Binary16 inputs, exact products, fp32 accumulation in ascending k.

    ``method`` picks the dense k-loop, the expand-and-sort route, or (``auto``)
    whichever fits in memory. Both produce identical bits.
    """
    _check_dims(A, B)
    if method == "auto":
        cells = max(A.rows * A.cols, B.rows * B.cols, A.rows * B.cols)
        method = "dense" if cells <= DENSE_LIMIT else "expand"
    if method == "dense":
        return _mixed_dense(A, B)
    if method == "expand":
        return _mixed_expand(A, B)
    raise ValueError(f"unknown method {method!r}")


def smape(X: ElementCOO, Y: ElementCOO) -> float:
    """Symmetric mean absolute percentage error over the union of nonzeros, in percent."""
    if X.rows != Y.rows or X.cols != Y.cols:
        raise DimensionError("smape needs matrices of equal shape")
    kx = X.row * X.cols + X.col
    ky = Y.row * Y.cols + Y.col
    keys = np.union1d(kx[X.val != 0], ky[Y.val != 0])
    if keys.size == 0:
        return 0.0
    x = np.zeros(keys.size)
    y = np.zeros(keys.size)
    x[np.searchsorted(keys, kx[X.val != 0])] = X.val[X.val != 0]
    y[np.searchsorted(keys, ky[Y.val != 0])] = Y.val[Y.val != 0]
    denom = np.abs(x) + np.abs(y)
    terms = np.divide(np.abs(x - y), denom, out=np.zeros_like(denom), where=denom != 0)
    return float(100.0 * terms.sum() / keys.size)

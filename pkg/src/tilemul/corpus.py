"""Random test matrices."""

from __future__ import annotations

import numpy as np

from .tile_format import ElementCOO


def random_coo(
    n: int,
    density: float,
    seed: int | np.random.Generator = 0,
    values: str = "half",
    cols: int | None = None,
) -> ElementCOO:
    """Random ``n x cols`` matrix with about ``density * n * cols`` nonzeros.

    values:
      ``half``    binary16 values in [-4, 4], never zero
      ``pattern`` all ones
      ``unit``    float64 values uniform in [0.5, 2)
    """
    rng = np.random.default_rng(seed)
    cols = n if cols is None else cols
    cells = n * cols
    k = int(rng.binomial(cells, density)) if cells else 0
    # duplicates collapse, so the realised density is slightly below target
    flat = np.unique(rng.integers(0, cells, size=k)) if k else np.zeros(0, dtype=np.int64)
    k = flat.size
    row, col = flat // cols, flat % cols
    if values == "pattern":
        val = np.ones(k)
    elif values == "unit":
        val = rng.uniform(0.5, 2.0, size=k)
    elif values == "half":
        val = rng.uniform(-4.0, 4.0, size=k).astype(np.float16).astype(np.float64)
        val[val == 0] = 1.0
    else:
        raise ValueError(f"unknown value kind {values!r}")
    return ElementCOO(n, cols, row, col, val)


def cancellation_coo(n: int = 16) -> ElementCOO:
    """A matrix whose square has exact zeros at positions the bitmaps mark occupied.

    Row 0 holds ``x`` and ``-x`` in columns 1 and 2; rows 1 and 2 both hold
    ``x`` in column 3, so ``(A @ A)[0, 3] = x*x - x*x = 0``.
    """
    entries = [(0, 1, 1.5), (0, 2, -1.5), (1, 3, 1.5), (2, 3, 1.5), (3, 3, 2.0)]
    if n > 9:
        entries.append((9, 9, 0.25))
    return ElementCOO.from_entries(n, n, entries)


def cancellation_pairs_coo(m: int, seed: int = 0) -> ElementCOO:
    """``2m x 2m`` matrix whose square cancels to exact zeros inside occupied tiles.

    The top-right block X has one ``(x, -x)`` pair per row at columns
    ``k1, k1 + 1``; the bottom-right block Y has identical rows ``k1`` and
    ``k1 + 1``. Each pair contributes ``x*y - x*y = 0`` to ``X @ Y`` while the
    bitmaps still predict a nonzero there.
    """
    rng = np.random.default_rng(seed)
    entries = {}
    for t in range(m // 2):
        cols = rng.choice(m, size=max(1, m // 4), replace=False)
        vals = rng.uniform(0.5, 4, size=cols.size).astype(np.float16).astype(np.float64)
        for r in (2 * t, 2 * t + 1):
            for c, v in zip(cols, vals):
                entries[(m + r, m + int(c))] = float(v)
    for i in range(m):
        t = int(rng.integers(0, m // 2))
        x = float(np.float16(rng.uniform(0.5, 4)))
        entries[(i, m + 2 * t)] = x
        entries[(i, m + 2 * t + 1)] = -x
    r, c = zip(*entries)
    return ElementCOO.from_arrays(2 * m, 2 * m, r, c, list(entries.values()))

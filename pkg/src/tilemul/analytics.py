"""Matrix statistics in the layout of the dataset table, and the
approach-selection advisor built on them."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError
from .memory import MemoryReport, memory_report
from .oracle import dense_spgemm_fp64
from .pipeline import _row_pointers, enumerate_pairs, zero_product_mask
from .tile_format import TILE, TiledMatrix, popcount, to_element_coo

GLOBAL_NNZ = 300_000
GLOBAL_ROW = 42
RELAXED_ROW = 21


@dataclass
class MatrixStats:
    dims: int = 0
    nnz_a: int = 0
    nnz_c: int | None = None
    nnz_cbar_elements: int | None = None
    nnz_c_tiles: int | None = None
    nnz_cbar_tiles_raw: int | None = None
    nnz_cbar_tiles_filtered: int | None = None
    avg_row: float = 0.0
    density_median: float = 0.0
    density_mean: float = 0.0
    density_std: float = 0.0
    name: str = ""

    # dataset-table column order
    COLUMNS = (
        ("matrix", "name"), ("dims", "dims"), ("nnzA", "nnz_a"), ("nnzC", "nnz_c"),
        ("nnzCbar", "nnz_cbar_elements"), ("nnzCtiles", "nnz_c_tiles"),
        ("nnzCbarTilesRaw", "nnz_cbar_tiles_raw"), ("nnzCbarTilesFiltered", "nnz_cbar_tiles_filtered"),
        ("densityMedian", "density_median"), ("densityMean", "density_mean"),
        ("densityStd", "density_std"), ("avgRow", "avg_row"),
    )

    def to_dict(self) -> dict:
        d = asdict(self)
        return {col: d[attr] for col, attr in self.COLUMNS}


def density_summary(bitmaps) -> tuple[float, float, float]:
    """(lower median, mean, population std) of tile popcounts."""
    pop = np.sort(popcount(bitmaps))
    if pop.size == 0:
        return 0.0, 0.0, 0.0
    return float(pop[(pop.size - 1) // 2]), float(pop.mean()), float(pop.std())


def intermediate_products(A: TiledMatrix, B: TiledMatrix) -> int:
    """Element-level intermediate products: sum over k of nnz(col k of A) * nnz(row k of B)."""
    a, b = to_element_coo(A), to_element_coo(B)
    col_a = np.bincount(a.col, minlength=A.cols)
    row_b = np.bincount(b.row, minlength=B.rows)
    return int(np.dot(col_a.astype(np.int64), row_b.astype(np.int64)))


def tile_pair_counts(A: TiledMatrix, B: TiledMatrix) -> tuple[int, int]:
    """(pairs before, pairs after) zero-product filtering."""
    ptr = _row_pointers(B)
    k = A.tile_col.astype(np.int64)
    raw = int((ptr[k + 1] - ptr[k]).sum())
    a_idx, b_idx = enumerate_pairs(A, B)
    filtered = int(np.count_nonzero(zero_product_mask(A.bitmap[a_idx], B.bitmap[b_idx])))
    return raw, filtered


def compute_stats(A: TiledMatrix, square_products: bool = True, name: str = "") -> MatrixStats:
    s = MatrixStats(dims=A.rows, nnz_a=A.nnz, name=name)
    s.avg_row = A.nnz / A.rows if A.rows else 0.0
    s.density_median, s.density_mean, s.density_std = density_summary(A.bitmap)
    if not square_products:
        return s
    if A.rows != A.cols:
        raise DimensionError(f"A*A statistics need a square matrix, got {A.rows}x{A.cols}")
    s.nnz_cbar_elements = intermediate_products(A, A)
    s.nnz_cbar_tiles_raw, s.nnz_cbar_tiles_filtered = tile_pair_counts(A, A)
    a = to_element_coo(A)
    C = dense_spgemm_fp64(a, a)
    s.nnz_c = C.nnz
    s.nnz_c_tiles = int(np.unique((C.row // TILE) * (-(-A.cols // TILE)) + C.col // TILE).size)
    return s


def stats_csv(stats: list[MatrixStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for c, _ in MatrixStats.COLUMNS])
    for s in stats:
        w.writerow(["" if v is None else v for v in s.to_dict().values()])
    return buf.getvalue()


@dataclass
class Criterion:
    recommended: bool
    condition: str
    evaluated: str


@dataclass
class Advice:
    """Whether the tiled approach is expected to beat each alternative."""

    criteria: dict[str, Criterion] = field(default_factory=dict)
    ratio_source: str = "filtered"

    def __getitem__(self, name: str) -> bool:
        return self.criteria[name].recommended

    def to_dict(self) -> dict:
        return {
            "ratioSource": self.ratio_source,
            "criteria": {k: asdict(v) for k, v in self.criteria.items()},
        }

    def table(self) -> str:
        width = max(map(len, self.criteria)) if self.criteria else 0
        lines = []
        for name, c in self.criteria.items():
            flag = "yes" if c.recommended else "no"
            lines.append(f"{name:<{width}}  {flag:<3}  {c.condition}  [{c.evaluated}]")
        return "\n".join(lines)


def _row_and_nnz(s: MatrixStats, row_min: float, nnz_min: int) -> Criterion:
    ok = s.avg_row > row_min and s.nnz_a > nnz_min
    return Criterion(ok, f"RowA > {row_min} AND NNZ(A) > {nnz_min}",
                     f"RowA = {s.avg_row:g}, NNZ(A) = {s.nnz_a}")


def _ratio(s: MatrixStats, ratio_source: str, op: str, bound: float) -> Criterion:
    tiles = s.nnz_cbar_tiles_filtered if ratio_source == "filtered" else s.nnz_cbar_tiles_raw
    text = f"NNZ(Cbar) / NNZ(Cbar_tiles) {op} {bound:g}"
    if not tiles or s.nnz_cbar_elements is None:
        return Criterion(False, text, "ratio undefined")
    r = s.nnz_cbar_elements / tiles
    ok = r >= bound if op == ">=" else r > bound
    return Criterion(ok, text, f"ratio = {s.nnz_cbar_elements}/{tiles} = {r:g}")


def advise(s: MatrixStats, ratio_source: str = "filtered") -> Advice:
    if ratio_source not in ("filtered", "raw"):
        raise ValueError("ratio_source must be 'filtered' or 'raw'")
    crit = {
        "cuSPARSE": Criterion(s.nnz_a > 200_000, "NNZ(A) > 200000", f"NNZ(A) = {s.nnz_a}"),
        "CUSP": _ratio(s, ratio_source, ">=", 1),
        "RMerge2": _row_and_nnz(s, GLOBAL_ROW, 100_000),
        "Nsparse": _row_and_nnz(s, GLOBAL_ROW, 100_000),
        "AC-SpGEMM": _ratio(s, ratio_source, ">", 9),
        "spECK": _row_and_nnz(s, GLOBAL_ROW, GLOBAL_NNZ),
        "global": _row_and_nnz(s, GLOBAL_ROW, GLOBAL_NNZ),
        "globalRelaxed": _row_and_nnz(s, RELAXED_ROW, GLOBAL_NNZ),
    }
    return Advice(crit, ratio_source)


__all__ = [
    "Advice", "Criterion", "MatrixStats", "MemoryReport", "advise", "compute_stats",
    "density_summary", "intermediate_products", "memory_report", "stats_csv", "tile_pair_counts",
]

"""Sparse matrix multiplication over 8x8 bitmap tiles with binary16 inputs
and fp32 accumulation."""

from .analytics import Advice, MatrixStats, advise, compute_stats
from .errors import (
    DimensionError,
    FormatError,
    InvariantError,
    ParseError,
    PrecisionError,
    UnsupportedError,
)
from .kernels import (
    CountResult,
    MulResult,
    PhaseTiming,
    SpgemmRun,
    compact,
    counting_pass,
    multiply_pass,
    paired_tile_mm,
    spgemm,
    spgemm_square,
    tile_mm_reference,
)
from .memory import MemoryReport, memory_report
from .mmio import read_matrix_market, write_matrix_market
from .oracle import dense_spgemm_fp64, dense_spgemm_mixed_ordered, smape
from .pipeline import (
    TaskList,
    boolean_tile_mm,
    build_task_list,
    enumerate_pairs,
    filter_zero_products,
    sort_and_segment,
)
from .tile_format import (
    ElementCOO,
    Tile8,
    TileEntry,
    TiledMatrix,
    bitmap_of_dense_tile,
    from_element_coo,
    read_tiled_binary,
    round_to_half,
    to_element_coo,
    write_tiled_binary,
)

__version__ = "0.1.0"

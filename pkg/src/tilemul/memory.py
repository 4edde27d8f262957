"""Byte accounting for a multiplication run.

Sizes follow the on-disk layout: a tile record is tileRow u32 + tileCol u32 +
bitmap u64 + elemIndex u64, elements are 2 (fp16) or 4 (fp32) bytes, task-list
pair references are two u32, offsets arrays are u64 with one trailing entry.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

TILE_RECORD_BYTES = 4 + 4 + 8 + 8
PAIR_BYTES = 4 + 4
OFFSET_BYTES = 8
COORD_BYTES = 4 + 4
COUNT_BYTES = 4
ELEMENT_BYTES = {"fp16": 2, "fp32": 4}


def matrix_bytes(num_tiles: int, nnz: int, kind: str) -> int:
    return TILE_RECORD_BYTES * num_tiles + ELEMENT_BYTES[kind] * nnz


@dataclass
class MemoryReport:
    input: int
    raw_pairs: int
    task_list: int
    counting: int
    pre_compaction: int
    output: int
    peak: int

    def to_dict(self) -> dict[str, int]:
        d = asdict(self)
        return {
            "input": d["input"], "rawPairs": d["raw_pairs"], "taskList": d["task_list"],
            "counting": d["counting"], "preCompaction": d["pre_compaction"],
            "output": d["output"], "peak": d["peak"],
        }


def memory_report(run) -> MemoryReport:
    """Per-phase bytes of a finished :class:`~tilemul.kernels.SpgemmRun`.

    ``peak`` is the largest sum of buffers alive together in one phase.
    """
    a, b, tl, cr, mr = run.a, run.b, run.task_list, run.counts, run.product
    inp = matrix_bytes(a.num_tiles, a.nnz, a.kind)
    if b is not a:
        inp += matrix_bytes(b.num_tiles, b.nnz, b.kind)
    nseg = tl.num_output_tiles
    raw = PAIR_BYTES * tl.raw_pairs
    task = PAIR_BYTES * tl.num_pairs + OFFSET_BYTES * (nseg + 1) + COORD_BYTES * nseg
    counting = COUNT_BYTES * nseg + OFFSET_BYTES * (nseg + 1)
    pre = TILE_RECORD_BYTES * nseg + ELEMENT_BYTES["fp32"] * int(mr.elements.size) + -(-nseg // 8)
    out = matrix_bytes(run.result.num_tiles, run.result.nnz, "fp32")
    phases = (
        inp + raw + PAIR_BYTES * tl.num_pairs,  # enumeration and filtering
        inp + task,                              # sorting
        inp + task + counting,
        inp + task + counting + pre,
        inp + pre + out,                         # compaction
    )
    return MemoryReport(inp, raw, task, counting, pre, out, max(phases))

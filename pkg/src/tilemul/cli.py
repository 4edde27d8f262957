"""``tilemul`` command-line interface.

Exit codes: 0 ok, 1 other failure, 2 unreadable input, 3 value outside the
binary16 range, 4 dimension mismatch, 5 non-finite accumulator.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .analytics import advise, compute_stats, stats_csv
from .corpus import random_coo
from .errors import DimensionError, FormatError, InvariantError, ParseError, PrecisionError, UnsupportedError
from .kernels import PhaseTiming, resolve_threads, spgemm_square
from .mmio import read_matrix_market
from .oracle import dense_spgemm_fp64, dense_spgemm_mixed_ordered, smape
from .tile_format import MAGIC, ElementCOO, TiledMatrix, from_element_coo, read_tiled_binary, tiled_binary_bytes, to_element_coo, write_tiled_binary

log = logging.getLogger("tilemul")

EXIT_OK, EXIT_OTHER, EXIT_PARSE, EXIT_OVERFLOW, EXIT_DIMENSION, EXIT_PRECISION = 0, 1, 2, 3, 4, 5


@dataclass
class LoadedInput:
    name: str
    coo: ElementCOO  # values as given, for the fp64 oracle
    tiled: TiledMatrix | None = None
    seed: int | None = None

    def matrix(self, kind: str = "fp16") -> TiledMatrix:
        if self.tiled is not None:
            return self.tiled
        return from_element_coo(self.coo, kind=kind)


def load_input(spec: str) -> LoadedInput:
    """A ``.mtx`` path, a tiled binary path, or ``random:N:DENSITY[:SEED]``."""
    if spec.startswith("random:"):
        parts = spec.split(":")
        if len(parts) not in (3, 4):
            raise ParseError(f"expected random:N:DENSITY[:SEED], got {spec!r}")
        try:
            n, density = int(parts[1]), float(parts[2])
            seed = int(parts[3]) if len(parts) == 4 else 0
        except ValueError:
            raise ParseError(f"bad random matrix spec {spec!r}") from None
        return LoadedInput(spec, random_coo(n, density, seed), seed=seed)
    path = Path(spec)
    with path.open("rb") as f:
        head = f.read(len(MAGIC))
    if head == MAGIC or path.suffix == ".tspz":
        tiled = read_tiled_binary(path)
        return LoadedInput(path.stem, to_element_coo(tiled), tiled)
    return LoadedInput(path.stem, read_matrix_market(path))


def output_hash(m: TiledMatrix) -> str:
    return hashlib.sha256(tiled_binary_bytes(m)).hexdigest()


@dataclass
class RunReport:
    matrixName: str
    dims: int
    nnzA: int
    nnzC: int
    timings: dict
    memory: dict
    smapeVsFp64: float
    threadCount: int
    seed: int | None
    pairing: bool = True
    outputSha256: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d.update(d.pop("extra"))
        return json.dumps(d, indent=2)


def _square(inp: LoadedInput, pairing: bool, threads: int | None):
    A = inp.matrix("fp16")
    run = spgemm_square(A, pairing=pairing, threads=threads)
    return A, run


def cmd_convert(args) -> int:
    inp = load_input(args.input)
    m = inp.matrix(args.precision) if inp.tiled is None else inp.tiled.astype(args.precision)
    write_tiled_binary(m, args.output)
    print(f"tiles={m.num_tiles} elements={m.nnz} precision={m.kind}")
    return EXIT_OK


def cmd_square(args) -> int:
    inp = load_input(args.input)
    _, run = _square(inp, args.pairing == "on", args.threads)
    C = run.result
    if args.output:
        write_tiled_binary(C, args.output)
    ref = dense_spgemm_fp64(inp.coo, inp.coo)
    report = RunReport(
        matrixName=inp.name, dims=inp.coo.rows, nnzA=run.a.nnz, nnzC=C.nnz,
        timings=run.timing.to_dict(), memory=run.memory.to_dict(),
        smapeVsFp64=smape(to_element_coo(C), ref), threadCount=run.threads, seed=inp.seed,
        pairing=run.pairing, outputSha256=output_hash(C),
    )
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    print(f"nnzA={report.nnzA} nnzC={report.nnzC} tiles={C.num_tiles} "
          f"total={run.timing.total:.4f}s smapeVsFp64={report.smapeVsFp64:.6g}%")
    return EXIT_OK


def cmd_compare(args) -> int:
    inp = load_input(args.input)
    _, run = _square(inp, args.pairing == "on", args.threads)
    got = to_element_coo(run.result)
    if args.mode == "mixed":
        ref = dense_spgemm_mixed_ordered(inp.coo, inp.coo)
    else:
        ref = dense_spgemm_fp64(inp.coo, inp.coo)
    value = smape(got, ref)
    if args.json:
        print(json.dumps({"matrix": inp.name, "mode": args.mode, "smape": value}))
    else:
        print(f"SMAPE ({args.mode}) = {value:.6g}%")
    return EXIT_OK


def cmd_stats(args) -> int:
    inp = load_input(args.input)
    s = compute_stats(inp.matrix("fp32"), square_products=True, name=inp.name)
    if args.json:
        print(json.dumps(s.to_dict(), indent=2))
    else:
        sys.stdout.write(stats_csv([s]))
    return EXIT_OK


def cmd_advise(args) -> int:
    inp = load_input(args.input)
    s = compute_stats(inp.matrix("fp32"), square_products=True, name=inp.name)
    a = advise(s, ratio_source=args.ratio)
    if args.json:
        print(json.dumps({"matrix": inp.name, **a.to_dict()}, indent=2))
    else:
        print(a.table())
    return EXIT_OK


BENCH_COLUMNS = ("matrix", "threads", "iters", "pairing", *PhaseTiming.FIELDS, "peakBytes", "outputSha256")


def cmd_bench(args) -> int:
    if args.iters < 1:
        raise ValueError("--iters must be at least 1")
    inp = load_input(args.input)
    pairing = args.pairing == "on"
    _square(inp, pairing, args.threads)  # warm-up
    runs = [_square(inp, pairing, args.threads)[1] for _ in range(args.iters)]
    hashes = {output_hash(r.result) for r in runs}
    if len(hashes) != 1:
        raise RuntimeError("repeated runs produced different outputs")
    medians = {k: statistics.median(r.timing.to_dict()[k] for r in runs) for k in PhaseTiming.FIELDS}
    row = {
        "matrix": inp.name, "threads": runs[0].threads, "iters": args.iters,
        "pairing": "on" if pairing else "off", **medians,
        "peakBytes": runs[0].memory.peak, "outputSha256": hashes.pop(),
    }
    if args.csv:
        path = Path(args.csv)
        new = not path.exists() or path.stat().st_size == 0
        with path.open("a", newline="") as f:
            w = csv.DictWriter(f, fieldnames=BENCH_COLUMNS, lineterminator="\n")
            if new:
                w.writeheader()
            w.writerow(row)
    print(" ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tilemul", description="Bitmap-tiled sparse matrix multiplication.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def square_opts(sp):
        sp.add_argument("--pairing", choices=("on", "off"), default="on")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker count (default: $TILEMUL_THREADS, else CPU count)")

    c = sub.add_parser("convert", help="Matrix Market to tiled binary")
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--precision", choices=("fp16", "fp32"), default="fp16")
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("square", help="compute A*A")
    s.add_argument("--input", required=True)
    s.add_argument("--output")
    s.add_argument("--report", help="write a JSON run report here")
    square_opts(s)
    s.set_defaults(func=cmd_square)

    cm = sub.add_parser("compare", help="SMAPE of A*A against a reference product")
    cm.add_argument("--input", required=True)
    cm.add_argument("--mode", choices=("fp64", "mixed"), default="fp64")
    cm.add_argument("--json", action="store_true")
    square_opts(cm)
    cm.set_defaults(func=cmd_compare)

    st = sub.add_parser("stats", help="matrix statistics for A*A")
    st.add_argument("--input", required=True)
    st.add_argument("--json", action="store_true")
    st.set_defaults(func=cmd_stats)

    ad = sub.add_parser("advise", help="approach-selection criteria")
    ad.add_argument("--input", required=True)
    ad.add_argument("--json", action="store_true")
    ad.add_argument("--ratio", choices=("filtered", "raw"), default="filtered",
                    help="tile-pair count used in the intermediate-product ratio")
    ad.set_defaults(func=cmd_advise)

    b = sub.add_parser("bench", help="time A*A phases")
    b.add_argument("--input", required=True)
    b.add_argument("--iters", type=int, default=3)
    b.add_argument("--csv")
    square_opts(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None:
        args.threads = resolve_threads(args.threads)
    try:
        return args.func(args)
    except (ParseError, UnsupportedError, FormatError, InvariantError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_PARSE
    except OverflowError as e:
        log.error("OverflowError: %s", e)
        return EXIT_OVERFLOW
    except DimensionError as e:
        log.error("DimensionError: %s", e)
        return EXIT_DIMENSION
    except PrecisionError as e:
        log.error("PrecisionError: %s", e)
        return EXIT_PRECISION
    except Exception as e:  # noqa: BLE001 - stable exit code for everything else
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())

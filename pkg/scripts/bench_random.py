"""Phase timings of A*A over a sweep of random matrices.

    python scripts/bench_random.py --sizes 256 512 1024 --density 0.01 --csv bench.csv
"""
import argparse

from tilemul import cli


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024])
    p.add_argument("--density", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--threads", type=int, nargs="+", default=[1])
    p.add_argument("--csv", default="bench.csv")
    args = p.parse_args()
    for n in args.sizes:
        for t in args.threads:
            spec = f"random:{n}:{args.density}:{args.seed}"
            code = cli.main(["bench", "--input", spec, "--iters", str(args.iters),
                             "--threads", str(t), "--csv", args.csv])
            if code:
                raise SystemExit(code)
    print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()

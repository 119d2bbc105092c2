"""Latency vs window size for the three implementations.

    python scripts/window_sweep.py --out sweep.csv
"""

import argparse
import sys

from slide_attn.bench import BenchConfig, emit_report, monotonicity_inversions, run_bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", default="56x56x64")
    ap.add_argument("--k", default="1,3,5,7,9")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", default="window_sweep.csv")
    args = ap.parse_args()

    h, w, c = (int(v) for v in args.size.split("x"))
    cfg = BenchConfig(sizes=[(h, w, c)], window_sizes=[int(k) for k in args.k.split(",")], repeats=args.repeats)
    report = run_bench(cfg)
    emit_report(report, "csv", args.out)

    print(f"{'k':>3} " + " ".join(f"{impl:>14}" for impl in cfg.implementations))
    for k in cfg.window_sizes:
        row = {cell.impl: cell.median_ns / 1e6 for cell in report.cells if cell.k == k}
        print(f"{k:>3} " + " ".join(f"{row[impl]:>11.2f} ms" for impl in cfg.implementations))
    for inv in monotonicity_inversions(report):
        print("inversion:", inv, file=sys.stderr)


if __name__ == "__main__":
    main()

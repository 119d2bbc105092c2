"""Default-sweep ordering check at k=3: is dwconv_fused faster than im2col in every cell?

    python scripts/efficiency_ordering.py [--json report.json]
"""

import argparse

from slide_attn.bench import BenchConfig, checksum_disagreements, emit_report, run_bench


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--json")
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    report = run_bench(BenchConfig(window_sizes=[3], repeats=args.repeats))
    if args.json:
        emit_report(report, "json", args.json)

    cells = {}
    for c in report.cells:
        cells.setdefault((c.H, c.W, c.C), {})[c.impl] = c.median_ns / 1e6
    ok = True
    for (h, w, c), t in cells.items():
        faster = t["dwconv_fused"] < t["im2col"]
        ok &= faster
        print(f"{h}x{w}x{c}: im2col {t['im2col']:.2f} ms  shift {t['shift']:.2f} ms  "
              f"dwconv_fused {t['dwconv_fused']:.2f} ms  ordering {'ok' if faster else 'VIOLATED'}")
    bad = checksum_disagreements(report)
    print(f"checksum disagreements: {len(bad)}")
    raise SystemExit(0 if ok and not bad else 1)


if __name__ == "__main__":
    main()

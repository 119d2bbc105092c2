"""Command line entry point: ``slide-attn bench | verify | demo``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    BenchConfig,
    checksum_disagreements,
    emit_report,
    monotonicity_inversions,
    run_bench,
)
from .errors import ConfigError


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _size(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"size must look like HxWxC, got {text!r}")
    return tuple(int(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slide-attn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="time the local-attention implementations")
    bench.add_argument("--config", type=Path, help="JSON file with BenchConfig fields; flags override it")
    bench.add_argument("--impls", type=lambda s: [v for v in s.split(",") if v],
                       help="comma list from im2col,shift,dwconv_fused")
    bench.add_argument("--sizes", type=_size, nargs="+", help="HxWxC triples, e.g. 28x28x64 56x56x96")
    bench.add_argument("--k", type=_int_list, help="comma list of odd window sizes")
    bench.add_argument("--heads", type=int)
    bench.add_argument("--repeats", type=int)
    bench.add_argument("--warmup", type=int)
    bench.add_argument("--dtype", choices=["f32", "f64"])
    bench.add_argument("--seed", type=int)
    bench.add_argument("--mask-padding", action="store_true", default=None)
    bench.add_argument("--deformed", action="store_true", default=None)
    bench.add_argument("--parallel", action="store_true", default=None,
                       help="run cells concurrently (voids the monotonicity check)")
    bench.add_argument("--out", type=Path, help="report path (default: print table to stdout)")
    bench.add_argument("--format", choices=["json", "csv"], default="json")

    verify = sub.add_parser("verify", help="run the equivalence and gradient suite")
    verify.add_argument("--quick", action="store_true", help="about a tenth of the cases")

    sub.add_parser("demo", help="print the 2x2, k=3 Im2Col worked example")
    return parser


_FLAG_TO_FIELD = {
    "impls": "implementations",
    "sizes": "sizes",
    "k": "window_sizes",
    "heads": "heads",
    "repeats": "repeats",
    "warmup": "warmup",
    "dtype": "dtype",
    "seed": "seed",
    "mask_padding": "mask_padding",
    "deformed": "use_deformed",
    "parallel": "parallel",
}


def bench_config_from_args(args) -> BenchConfig:
    values = {}
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
    for flag, name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag)
        if value is not None:
            values[name] = value
    return BenchConfig.from_dict(values)


def _print_table(report) -> None:
    print(f"{'impl':<13}{'H':>4}{'W':>4}{'C':>5}{'k':>3}{'median ms':>11}{'p10 ms':>9}{'p90 ms':>9}  checksum")
    for c in report.cells:
        print(
            f"{c.impl:<13}{c.H:>4}{c.W:>4}{c.C:>5}{c.k:>3}{c.median_ns / 1e6:>11.3f}"
            f"{c.p10_ns / 1e6:>9.3f}{c.p90_ns / 1e6:>9.3f}  {c.checksum:.6g}"
        )


def cmd_bench(args) -> int:
    cfg = bench_config_from_args(args)
    report = run_bench(cfg)
    if args.out is not None:
        emit_report(report, args.format, args.out)
        print(f"wrote {len(report.cells)} rows to {args.out}")
    else:
        _print_table(report)
    if not cfg.use_deformed:
        for key, sums in checksum_disagreements(report):
            print(f"warning: checksum disagreement in cell {key}: {sums}", file=sys.stderr)
    if not cfg.parallel:
        for inv in monotonicity_inversions(report):
            print(f"note: median time decreased with k for {inv}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("verify: " + ("all checks passed" if ok else "FAILED"))
    return 0 if ok else 1


def cmd_demo(args) -> int:
    from .demo import render

    print(render())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"bench": cmd_bench, "verify": cmd_verify, "demo": cmd_demo}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Latency benchmark of the three local-attention implementations.

Each implementation runs the whole block (projections, local keys/values,
softmax attention, output projection) on identical seeded inputs:

* ``im2col``: column-based Im2Col per query window, then per-query attention.
* ``shift``: Im2Col rows from k*k feature shifts, vectorised attention.
* ``dwconv_fused``: one grouped convolution with the shift bank (or the
  merged deformed kernels), vectorised attention.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .attention import (
    AttentionConfig,
    attend_im2col,
    init_attention_params,
    project_qkv,
    slide_attention_forward,
)
from .deformed import reparameterize
from .errors import ConfigError
from .im2col import im2col, local_attention_reference
from .shift import im2col_via_shifts

IMPLEMENTATIONS = ("im2col", "shift", "dwconv_fused")
CSV_COLUMNS = ("impl", "H", "W", "C", "k", "heads", "dtype", "median_ns", "p10_ns", "p90_ns", "checksum")
_DTYPES = {"f32": np.float32, "f64": np.float64}


def thread_cap() -> int:
    """Upper bound on worker threads, from SLIDE_ATTN_THREADS (default: CPU count)."""
    raw = os.environ.get("SLIDE_ATTN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"SLIDE_ATTN_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class BenchConfig:
    implementations: tuple[str, ...] = IMPLEMENTATIONS
    sizes: tuple[tuple[int, int, int], ...] = ((28, 28, 64), (28, 28, 96), (56, 56, 64), (56, 56, 96))
    window_sizes: tuple[int, ...] = (3, 5, 7)
    heads: int = 2
    repeats: int = 5
    warmup: int = 1
    dtype: str = "f32"
    seed: int = 0
    mask_padding: bool = False
    use_deformed: bool = False
    parallel: bool = False

    def __post_init__(self):
        self.implementations = tuple(self.implementations)
        self.sizes = tuple(tuple(int(v) for v in s) for s in self.sizes)
        self.window_sizes = tuple(int(k) for k in self.window_sizes)
        self.validate()

    def validate(self) -> None:
        bad = [i for i in self.implementations if i not in IMPLEMENTATIONS]
        if not self.implementations or bad:
            raise ConfigError(f"implementations: unknown {bad}, choose from {IMPLEMENTATIONS}")
        if self.repeats < 3:
            raise ConfigError(f"repeats: must be >= 3, got {self.repeats}")
        if self.warmup < 1:
            raise ConfigError(f"warmup: must be >= 1, got {self.warmup}")
        if not self.window_sizes or any(k < 1 or k % 2 == 0 for k in self.window_sizes):
            raise ConfigError(f"window_sizes: all must be odd and >= 1, got {self.window_sizes}")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype: must be one of {sorted(_DTYPES)}, got {self.dtype!r}")
        if self.heads < 1:
            raise ConfigError(f"heads: must be positive, got {self.heads}")
        for s in self.sizes:
            if len(s) != 3 or min(s) < 1:
                raise ConfigError(f"sizes: each entry must be a positive (H, W, C) triple, got {s}")
            if s[2] % self.heads:
                raise ConfigError(f"sizes: channels {s[2]} not divisible by heads {self.heads}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["implementations"] = list(self.implementations)
        d["sizes"] = [list(s) for s in self.sizes]
        d["window_sizes"] = list(self.window_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BenchConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class BenchCell:
    impl: str
    H: int
    W: int
    C: int
    k: int
    heads: int
    dtype: str
    median_ns: float
    p10_ns: float
    p90_ns: float
    checksum: float


@dataclass
class BenchReport:
    config: dict
    environment: dict = field(default_factory=dict)
    cells: list[BenchCell] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "environment": self.environment,
            "cells": [dataclasses.asdict(c) for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        return cls(d["config"], d.get("environment", {}), [BenchCell(**c) for c in d["cells"]])


def environment_info(dtype: str) -> dict:
    return {
        "dtype": dtype,
        "build_profile": f"python-{platform.python_version()}/numpy-{np.__version__}/{_kernels.BACKEND}",
        "platform": platform.platform(),
        "cpu_count": os.cpu_count(),
    }


def make_runner(impl: str, x, cfg: AttentionConfig, params):
    """Zero-argument callable running one forward pass of ``impl``."""
    k, d = cfg.window_size, cfg.head_dim

    if impl == "im2col":
        def run():
            q, kp, vp = project_qkv(x, params)
            z = local_attention_reference(q, im2col(kp, k), im2col(vp, k), d, cfg.mask_padding)
            return z @ params.w_o
    elif impl == "shift":
        fixed = dataclasses.replace(cfg, use_deformed=False)

        def run():
            q, kp, vp = project_qkv(x, params)
            z = attend_im2col(q, im2col_via_shifts(kp, k), im2col_via_shifts(vp, k), fixed)
            return z @ params.w_o
    elif impl == "dwconv_fused":
        def run():
            return slide_attention_forward(x, cfg, params)
    else:
        raise ConfigError(f"implementations: unknown implementation {impl!r}")
    return run


def _cell_inputs(cfg: BenchConfig, h: int, w: int, c: int, k: int):
    dtype = _DTYPES[cfg.dtype]
    attn_cfg = AttentionConfig(c, cfg.heads, k, cfg.mask_padding, cfg.use_deformed)
    rng = np.random.default_rng([cfg.seed, h, w, c, k])
    x = rng.standard_normal((1, h, w, c)).astype(dtype)
    params = init_attention_params(attn_cfg, int(rng.integers(2**31)), dtype=dtype)
    if cfg.use_deformed:
        params = dataclasses.replace(
            params,
            deformed_k=reparameterize(params.deformed_k),
            deformed_v=reparameterize(params.deformed_v),
        )
    return x, attn_cfg, params


def time_callable(fn, repeats: int, warmup: int):
    """Run ``fn`` warmup + repeats times; return (last output, per-repeat ns)."""
    for _ in range(warmup):
        out = fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        out = fn()
        samples.append(time.perf_counter_ns() - t0)
    return out, np.asarray(samples, dtype=np.float64)


def _run_cell(cfg: BenchConfig, h: int, w: int, c: int, k: int) -> list[BenchCell]:
    x, attn_cfg, params = _cell_inputs(cfg, h, w, c, k)
    rows = []
    for impl in cfg.implementations:
        out, ns = time_callable(make_runner(impl, x, attn_cfg, params), cfg.repeats, cfg.warmup)
        p10, med, p90 = np.percentile(ns, [10, 50, 90])
        checksum = float(np.sum(out, dtype=np.float64))
        rows.append(BenchCell(impl, h, w, c, k, cfg.heads, cfg.dtype, float(med), float(p10), float(p90), checksum))
    return rows


def run_bench(cfg: BenchConfig) -> BenchReport:
    cfg.validate()
    cells = [(h, w, c, k) for (h, w, c) in cfg.sizes for k in cfg.window_sizes]
    env = environment_info(cfg.dtype)
    env["parallel"] = cfg.parallel
    # timing loops run with BLAS pinned to one thread
    with threadpool_limits(limits=1):
        if cfg.parallel:
            with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
                results = list(pool.map(lambda cell: _run_cell(cfg, *cell), cells))
        else:
            results = [_run_cell(cfg, *cell) for cell in cells]
    return BenchReport(cfg.to_dict(), env, [row for rows in results for row in rows])


def checksum_disagreements(report: BenchReport, rel_tol: float = 1e-3) -> list[tuple]:
    """Cells whose implementations' checksums differ by more than ``rel_tol``."""
    groups: dict[tuple, list[BenchCell]] = {}
    for cell in report.cells:
        groups.setdefault((cell.H, cell.W, cell.C, cell.k), []).append(cell)
    bad = []
    for key, members in groups.items():
        sums = np.array([m.checksum for m in members])
        scale = max(np.abs(sums).max(), 1e-30)
        if (sums.max() - sums.min()) / scale > rel_tol:
            bad.append((key, {m.impl: m.checksum for m in members}))
    return bad


def monotonicity_inversions(report: BenchReport) -> list[tuple]:
    """(impl, H, W, C, k_small, k_large) pairs where a larger window ran faster."""
    series: dict[tuple, list[BenchCell]] = {}
    for cell in report.cells:
        series.setdefault((cell.impl, cell.H, cell.W, cell.C), []).append(cell)
    out = []
    for key, cells in series.items():
        cells = sorted(cells, key=lambda c: c.k)
        for a, b in zip(cells, cells[1:]):
            if b.median_ns < a.median_ns:
                out.append((*key, a.k, b.k))
    return out


def emit_report(report: BenchReport, fmt: str, path) -> None:
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
        elif fmt == "csv":
            with path.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_COLUMNS)
                for cell in report.cells:
                    writer.writerow([getattr(cell, col) for col in CSV_COLUMNS])
        else:
            raise ConfigError(f"format: must be 'json' or 'csv', got {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def load_report(path) -> BenchReport:
    path = Path(path)
    try:
        return BenchReport.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise OSError(f"cannot read report from {path}: {exc}") from exc

"""Equivalence and gradient suite behind the ``verify`` subcommand.

Every check returns a :class:`CheckResult`; the case counts default to the
acceptance thresholds and can be lowered for a quick smoke run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import (
    AttentionConfig,
    AttentionParams,
    init_attention_params,
    project_qkv,
    slide_attention_backward,
    slide_attention_forward,
)
from .deformed import backward_two_path, forward_merged, forward_two_path, init_deformed, reparameterize
from .demo import worked_example
from .gradcheck import DEFAULT_EPS, DEFAULT_TOL, GradReport, check_gradients
from .im2col import im2col, local_attention_reference, window_offsets
from .shift import build_shift_kernel_bank, im2col_via_dwconv, im2col_via_shifts, shift_feature
from .tensor import (
    count_ops,
    depthwise_conv2d,
    depthwise_conv2d_backward,
    grouped_conv2d,
    grouped_conv2d_backward,
    matmul,
    matmul_backward,
    softmax_backward,
    softmax_lastdim,
)

WINDOWS = (1, 3, 5, 7)


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.cases} cases, {self.detail} ({self.seconds:.2f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        result.seconds = time.perf_counter() - t0
        return result

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _random_map(rng, max_hw=9, max_c=8):
    h, w = rng.integers(1, max_hw + 1, size=2)
    c = rng.integers(1, max_c + 1)
    return rng.standard_normal((1, h, w, c))


@_timed
def check_im2col_equivalence(cases: int = 200, seed: int = 0) -> CheckResult:
    """im2col == im2col_via_shifts == im2col_via_dwconv (fused and unfused), element-exact."""
    rng = np.random.default_rng(seed)
    failures = 0
    for n in range(cases):
        f = _random_map(rng)
        k = WINDOWS[n % len(WINDOWS)]
        ref = im2col(f, k).data
        bank = build_shift_kernel_bank(k, f.shape[-1])
        others = (
            im2col_via_shifts(f, k).data,
            im2col_via_dwconv(f, bank, fuse=True).data,
            im2col_via_dwconv(f, bank, fuse=False).data,
        )
        failures += not all(np.array_equal(ref, o) for o in others)
    return CheckResult("im2col three-way equivalence", failures == 0, cases, f"{failures} mismatching cases")


@_timed
def check_shift_kernel_identity(cases: int = 100, seed: int = 1) -> CheckResult:
    """depthwise_conv2d with each bank direction equals shift_feature, element-exact."""
    rng = np.random.default_rng(seed)
    failures = 0
    directions = 0
    for n in range(cases):
        f = _random_map(rng)
        k = WINDOWS[n % len(WINDOWS)]
        bank = build_shift_kernel_bank(k, f.shape[-1])
        for u, v in window_offsets(k):
            directions += 1
            failures += not np.array_equal(depthwise_conv2d(f, bank.direction(u, v)), shift_feature(f, u, v))
    return CheckResult(
        "shift-kernel identity", failures == 0, cases, f"{directions} directions, {failures} mismatches"
    )


def random_attention_case(rng, mask_padding: bool, use_deformed: bool = False, max_hw: int = 6, min_hw: int = 1):
    heads = int(rng.choice([1, 2, 4]))
    head_dim = int(rng.integers(1, 5))
    k = int(rng.choice([1, 3, 5]))
    cfg = AttentionConfig(heads * head_dim, heads, k, mask_padding, use_deformed)
    h, w = (int(v) for v in rng.integers(min_hw, max_hw + 1, size=2))
    x = rng.standard_normal((1, h, w, cfg.embed_dim))
    params = init_attention_params(cfg, int(rng.integers(2**31)))
    return x, cfg, params


def oracle_attention(x, cfg: AttentionConfig, params: AttentionParams):
    """Projection -> column-based Im2Col -> per-query reference attention -> output projection."""
    q, kp, vp = project_qkv(x, params)
    k = cfg.window_size
    z = local_attention_reference(q, im2col(kp, k), im2col(vp, k), cfg.head_dim, cfg.mask_padding)
    return z @ params.w_o


@_timed
def check_attention_oracle(configs: int = 50, seed: int = 2, tol: float = 1e-10) -> CheckResult:
    """Fixed-bank slide attention vs Im2Col reference, both masking modes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in range(configs):
        for mask in (False, True):
            x, cfg, params = random_attention_case(rng, mask)
            err = float(np.abs(slide_attention_forward(x, cfg, params) - oracle_attention(x, cfg, params)).max())
            worst = max(worst, err)
    return CheckResult(
        "attention oracle equivalence", worst <= tol, configs * 2, f"max abs error {worst:.2e} (tol {tol:g})"
    )


@_timed
def check_reparameterization(cases: int = 100, seed: int = 3) -> CheckResult:
    """Merged single-conv path equals the two-path sum; merged runs one conv instead of two."""
    rng = np.random.default_rng(seed)
    tols = {np.float64: 1e-12, np.float32: 1e-6}
    worst = {np.float64: 0.0, np.float32: 0.0}
    counts_ok = True
    for n in range(cases):
        for dtype, tol in tols.items():
            f = _random_map(rng).astype(dtype)
            k = WINDOWS[n % len(WINDOWS)]
            p = init_deformed(k, f.shape[-1], int(rng.integers(2**31)), dtype=dtype)
            with count_ops() as two:
                a = forward_two_path(f, p)
            merged = reparameterize(p)
            with count_ops() as one:
                b = forward_merged(f, merged)
            # |a - b| <= tol * (1 + |b|): absolute near zero, relative for large outputs
            err = float((np.abs(a - b) / (1.0 + np.abs(b.astype(np.float64)))).max())
            worst[dtype] = max(worst[dtype], err)
            counts_ok &= two["grouped_conv2d"] == 2 and one["grouped_conv2d"] == 1
            counts_ok &= two["conv_macs"] == 2 * one["conv_macs"]
    passed = counts_ok and all(worst[d] <= tols[d] for d in tols)
    detail = (
        f"max scaled error f64 {worst[np.float64]:.2e} (tol 1e-12), f32 {worst[np.float32]:.2e} (tol 1e-6), "
        f"conv counts {'2 vs 1' if counts_ok else 'WRONG'}"
    )
    return CheckResult("re-parameterization exactness", passed, cases * 2, detail)


# ---- gradient cases: each builder returns (forward, backward, params) for one seed


def _scalarize(rng, shape):
    return rng.standard_normal(shape)


def grad_case_matmul(rng):
    m, kk, n = rng.integers(1, 6, size=3)
    batch = int(rng.integers(0, 3))
    lead = (batch,) if batch else ()
    params = {"a": rng.standard_normal((*lead, m, kk)), "b": rng.standard_normal((*lead, kk, n))}
    r = _scalarize(rng, (*lead, m, n))

    def fwd(d):
        return float((matmul(d["a"], d["b"]) * r).sum())

    def bwd(d):
        ga, gb = matmul_backward(d["a"], d["b"], r)
        return {"a": ga, "b": gb}

    return fwd, bwd, params


def grad_case_softmax(rng):
    m, n = rng.integers(1, 6, size=2)
    params = {"t": 2 * rng.standard_normal((m, n))}
    r = _scalarize(rng, (m, n))

    def fwd(d):
        return float((softmax_lastdim(d["t"]) * r).sum())

    def bwd(d):
        return {"t": softmax_backward(softmax_lastdim(d["t"]), r)}

    return fwd, bwd, params


def _conv_shapes(rng):
    h, w, c = rng.integers(1, 6, size=3)
    k = int(rng.choice([1, 3, 5]))
    return int(h), int(w), int(c), k


def grad_case_depthwise(rng):
    h, w, c, k = _conv_shapes(rng)
    params = {"t": rng.standard_normal((1, h, w, c)), "kernel": rng.standard_normal((k, k, c))}
    r = _scalarize(rng, (1, h, w, c))

    def fwd(d):
        return float((depthwise_conv2d(d["t"], d["kernel"]) * r).sum())

    def bwd(d):
        gt, gk = depthwise_conv2d_backward(d["t"], d["kernel"], r)
        return {"t": gt, "kernel": gk}

    return fwd, bwd, params


def grad_case_grouped(rng):
    h, w, c, k = _conv_shapes(rng)
    g = int(rng.integers(1, 6))
    params = {"t": rng.standard_normal((1, h, w, c)), "kernels": rng.standard_normal((k, k, c, g))}
    r = _scalarize(rng, (1, h, w, c * g))

    def fwd(d):
        return float((grouped_conv2d(d["t"], d["kernels"]) * r).sum())

    def bwd(d):
        gt, gk = grouped_conv2d_backward(d["t"], d["kernels"], r)
        return {"t": gt, "kernels": gk}

    return fwd, bwd, params


def grad_case_deformed(rng):
    h, w, c, k = _conv_shapes(rng)
    p = init_deformed(k, c, int(rng.integers(2**31)), scale=1.0)
    params = {"f": rng.standard_normal((1, h, w, c)), "learnable": p.learnable}
    r = _scalarize(rng, (1, h, w, c * k * k))

    def fwd(d):
        return float((forward_two_path(d["f"], p.with_learnable(d["learnable"])) * r).sum())

    def bwd(d):
        gf, gl = backward_two_path(d["f"], p.with_learnable(d["learnable"]), r)
        return {"f": gf, "learnable": gl}

    return fwd, bwd, params


def _attention_grad_case(rng, mask_padding, use_deformed):
    cfg = AttentionConfig(4, 2, 3, mask_padding, use_deformed)
    base = init_attention_params(cfg, int(rng.integers(2**31)))
    h, w = (int(v) for v in rng.integers(2, 4, size=2))
    params = {"x": rng.standard_normal((1, h, w, 4))}
    params.update({name: getattr(base, name) for name in ("w_q", "w_k", "w_v", "w_o")})
    if use_deformed:
        # learnable kernels at unit scale so their gradients are not dwarfed
        params["deformed_k"] = rng.uniform(-1, 1, base.deformed_k.learnable.shape)
        params["deformed_v"] = rng.uniform(-1, 1, base.deformed_v.learnable.shape)
    r = _scalarize(rng, params["x"].shape)

    def unpack(d):
        extra = {}
        if use_deformed:
            extra = dict(
                deformed_k=base.deformed_k.with_learnable(d["deformed_k"]),
                deformed_v=base.deformed_v.with_learnable(d["deformed_v"]),
            )
        return AttentionParams(d["w_q"], d["w_k"], d["w_v"], d["w_o"], **extra)

    def fwd(d):
        return float((slide_attention_forward(d["x"], cfg, unpack(d)) * r).sum())

    def bwd(d):
        gx, grads = slide_attention_backward(d["x"], cfg, unpack(d), r)
        return {"x": gx, **grads}

    return fwd, bwd, params


GRADIENT_CASES: dict[str, Callable] = {
    "matmul": grad_case_matmul,
    "softmax": grad_case_softmax,
    "depthwise_conv2d": grad_case_depthwise,
    "grouped_conv2d": grad_case_grouped,
    "deformed_two_path": grad_case_deformed,
    "attention": lambda rng: _attention_grad_case(rng, False, False),
    "attention_masked": lambda rng: _attention_grad_case(rng, True, False),
    "attention_deformed": lambda rng: _attention_grad_case(rng, False, True),
    "attention_deformed_masked": lambda rng: _attention_grad_case(rng, True, True),
}


def run_gradient_case(name: str, seed: int, eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL,
                      perturb: float | None = None) -> list[GradReport]:
    """Gradient reports for one op and seed; ``perturb`` scales the analytic gradient by (1 + perturb)."""
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    fwd, bwd, params = GRADIENT_CASES[name](rng)
    if perturb is not None:
        inner = bwd

        def bwd(d):
            return {key: None if g is None else g * (1 + perturb) for key, g in inner(d).items()}

    return check_gradients(fwd, bwd, params, eps=eps, tol=tol)


@_timed
def check_gradients_suite(seeds: int = 20) -> CheckResult:
    """Every analytic backward vs central differences; plus the 1% perturbation negative control."""
    failing = []
    worst = 0.0
    for name in GRADIENT_CASES:
        for seed in range(seeds):
            for report in run_gradient_case(name, seed):
                worst = max(worst, report.max_rel_error)
                if not report.passed:
                    failing.append(f"{name}/{seed}/{report.parameter_name}")
    control_caught = all(
        not all(r.passed for r in run_gradient_case(name, 0, perturb=0.01)) for name in GRADIENT_CASES
    )
    detail = f"{len(GRADIENT_CASES)} ops x {seeds} seeds, max rel error {worst:.2e} (tol {DEFAULT_TOL:g}); "
    detail += f"negative control {'detected' if control_caught else 'MISSED'}"
    if failing:
        detail += f"; failing: {failing[:5]}"
    return CheckResult("gradient checks", not failing and control_caught, len(GRADIENT_CASES) * seeds, detail)


def interior_mask(height: int, width: int, margin: int) -> np.ndarray:
    i = np.arange(height)[:, None]
    j = np.arange(width)[None, :]
    return (i >= margin) & (i < height - margin) & (j >= margin) & (j < width - margin)


@_timed
def check_translation_equivariance(instances: int = 50, seed: int = 4) -> CheckResult:
    """shift-then-attend equals attend-then-shift away from the borders, exactly."""
    rng = np.random.default_rng(seed)
    failures = 0
    compared = 0
    for _ in range(instances):
        mask = bool(rng.integers(2))
        x, cfg, params = random_attention_case(rng, mask, max_hw=12, min_hw=6)
        s, t = (int(v) for v in rng.integers(-2, 3, size=2))
        lhs = slide_attention_forward(shift_feature(x, s, t), cfg, params)
        rhs = shift_feature(slide_attention_forward(x, cfg, params), s, t)
        margin = cfg.window_size // 2 + max(abs(s), abs(t))
        keep = interior_mask(x.shape[1], x.shape[2], margin)
        compared += int(keep.sum())
        failures += not np.array_equal(lhs[0][keep], rhs[0][keep])
    return CheckResult(
        "translation equivariance (interior)", failures == 0, instances,
        f"{compared} interior pixels compared, {failures} mismatching instances",
    )


@_timed
def check_demo() -> CheckResult:
    """The 2x2, k=3 worked example: rows are shifted maps, columns are query windows."""
    ex = worked_example()
    rows_ok = all(
        np.array_equal(ex["matrix"][g], ex["shifted"][uv].ravel()) for g, uv in enumerate(ex["offsets"])
    )
    cols_ok = all(
        np.array_equal(ex["matrix"][:, i * 2 + j], ex["windows"][(i, j)].ravel()) for i, j in ex["windows"]
    )
    shape_ok = ex["matrix"].shape == (9, 4)
    ok = rows_ok and cols_ok and shape_ok
    return CheckResult("worked 2x2 example", ok, 1, f"rows {rows_ok}, columns {cols_ok}, shape {ex['matrix'].shape}")


def run_all(quick: bool = False) -> list[CheckResult]:
    scale = 10 if quick else 1
    return [
        check_im2col_equivalence(200 // scale),
        check_shift_kernel_identity(100 // scale),
        check_attention_oracle(50 // scale),
        check_reparameterization(100 // scale),
        check_gradients_suite(20 // scale if not quick else 2),
        check_translation_equivariance(50 // scale),
        check_demo(),
    ]

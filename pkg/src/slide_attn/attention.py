"""Slide attention block: projections, conv-generated local keys/values, softmax, output projection."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .deformed import DeformedShiftParams, backward_two_path, forward_merged, forward_two_path, init_deformed
from .errors import ConfigError, ShapeError
from .im2col import Im2ColMatrix, window_validity
from .shift import build_shift_kernel_bank
from .tensor import grouped_conv2d, grouped_conv2d_backward, softmax_backward, softmax_lastdim


@dataclass(frozen=True)
class AttentionConfig:
    embed_dim: int
    num_heads: int
    window_size: int
    mask_padding: bool = False
    use_deformed: bool = False

    def __post_init__(self):
        if self.embed_dim < 1 or self.num_heads < 1:
            raise ConfigError(f"embed_dim and num_heads must be positive: {self}")
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ConfigError(f"window_size must be odd and >= 1, got {self.window_size}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


@dataclass(frozen=True)
class AttentionParams:
    """Projection matrices are [C_in, C_out]: q = x @ w_q per pixel."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    deformed_k: DeformedShiftParams | None = None
    deformed_v: DeformedShiftParams | None = None

    def __post_init__(self):
        c = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_o"):
            w = getattr(self, name)
            if w.shape != (c, c):
                raise ShapeError(f"{name} must be square [{c}, {c}], got {w.shape}")

    @property
    def embed_dim(self) -> int:
        return self.w_q.shape[0]


def init_attention_params(cfg: AttentionConfig, seed: int, dtype=np.float64) -> AttentionParams:
    rng = np.random.default_rng(seed)
    c = cfg.embed_dim
    w = [(rng.standard_normal((c, c)) / np.sqrt(c)).astype(dtype) for _ in range(4)]
    deformed_k = deformed_v = None
    if cfg.use_deformed:
        seeds = rng.integers(0, 2**31, size=2)
        deformed_k = init_deformed(cfg.window_size, c, int(seeds[0]), dtype=dtype)
        deformed_v = init_deformed(cfg.window_size, c, int(seeds[1]), dtype=dtype)
    return AttentionParams(*w, deformed_k=deformed_k, deformed_v=deformed_v)


def _check(x: np.ndarray, cfg: AttentionConfig, p: AttentionParams) -> None:
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"x must be [1, H, W, C], got {x.shape}")
    if x.shape[-1] != cfg.embed_dim or p.embed_dim != cfg.embed_dim:
        raise ShapeError(
            f"channel mismatch: x has {x.shape[-1]}, config {cfg.embed_dim}, params {p.embed_dim}"
        )
    if cfg.use_deformed and (p.deformed_k is None or p.deformed_v is None):
        raise ConfigError("use_deformed=True but params carry no deformed-shift kernels")
    if cfg.use_deformed and p.deformed_k.k != cfg.window_size:
        raise ConfigError(f"deformed kernels use k={p.deformed_k.k}, config says {cfg.window_size}")


def project_qkv(x: np.ndarray, p: AttentionParams):
    if x.shape[-1] != p.embed_dim:
        raise ShapeError(f"x has {x.shape[-1]} channels, projections expect {p.embed_dim}")
    return x @ p.w_q, x @ p.w_k, x @ p.w_v


@functools.lru_cache(maxsize=64)
def _bank(k: int, channels: int, dtype_name: str):
    return build_shift_kernel_bank(k, channels, np.dtype(dtype_name)).kernels


def _local_features(f, k, deformed, use_deformed):
    """[1, H, W, C] -> [1, H, W, C*k*k] local window features."""
    if not use_deformed:
        return grouped_conv2d(f, _bank(k, f.shape[-1], f.dtype.name))
    if deformed.merged is not None:
        return forward_merged(f, deformed)
    return forward_two_path(f, deformed)


def attend(q, keys, values, cfg: AttentionConfig, height: int, width: int):
    """Softmax attention of each query over its own k*k local keys.

    ``keys``/``values`` are [H*W, C, k*k] (channel c, direction g). Returns
    the concatenated head output [H*W, C] and the attention weights
    [H*W, M, k*k].
    """
    heads, d, g = cfg.num_heads, cfg.head_dim, cfg.window_size**2
    n = height * width
    qh = q.reshape(n, heads, d)
    kh = keys.reshape(n, heads, d, g)
    vh = values.reshape(n, heads, d, g)
    logits = np.einsum("nmd,nmdg->nmg", qh, kh) / np.sqrt(d)
    if cfg.mask_padding:
        valid = window_validity(height, width, cfg.window_size).T[:, None, :]
        logits = np.where(valid, logits, -np.inf)
    weights = softmax_lastdim(logits)
    z = np.einsum("nmg,nmdg->nmd", weights, vh)
    return z.reshape(n, heads * d), weights


def attend_im2col(q, kmat: Im2ColMatrix, vmat: Im2ColMatrix, cfg: AttentionConfig):
    """:func:`attend` on Im2Col matrices [k*k, H*W, C] instead of conv output."""
    h, w, _ = kmat.origin_shape
    keys = kmat.data.transpose(1, 2, 0)
    values = vmat.data.transpose(1, 2, 0)
    z, _ = attend(q, keys, values, cfg, h, w)
    return z.reshape(1, h, w, -1)


def _forward(x, cfg, p):
    _check(x, cfg, p)
    _, h, w, c = x.shape
    g = cfg.window_size**2
    q, kp, vp = project_qkv(x, p)
    keys = _local_features(kp, cfg.window_size, p.deformed_k, cfg.use_deformed).reshape(h * w, c, g)
    values = _local_features(vp, cfg.window_size, p.deformed_v, cfg.use_deformed).reshape(h * w, c, g)
    z, weights = attend(q, keys, values, cfg, h, w)
    out = (z @ p.w_o).reshape(1, h, w, c)
    cache = dict(q=q, kp=kp, vp=vp, keys=keys, values=values, weights=weights, z=z)
    return out, cache


def slide_attention_forward(x: np.ndarray, cfg: AttentionConfig, p: AttentionParams) -> np.ndarray:
    return _forward(x, cfg, p)[0]


def _local_features_backward(f, k, deformed, use_deformed, grad):
    grad = grad.reshape(f.shape[:3] + (-1,))
    if not use_deformed:
        grad_f, _ = grouped_conv2d_backward(f, _bank(k, f.shape[-1], f.dtype.name), grad)
        return grad_f, None
    if deformed.merged is not None:
        # merged kernel = fixed + learnable, so d/d(learnable) = d/d(merged)
        return grouped_conv2d_backward(f, deformed.merged, grad)
    return backward_two_path(f, deformed, grad)


def slide_attention_backward(x, cfg: AttentionConfig, p: AttentionParams, upstream_grad):
    """Analytic gradients of ``sum(forward(x) * upstream_grad)``.

    Returns ``(grad_x, grads)`` where ``grads`` maps ``w_q``, ``w_k``,
    ``w_v``, ``w_o`` and, with deformed shifting on, ``deformed_k`` and
    ``deformed_v`` (learnable kernels only) to their gradients.
    """
    out, cache = _forward(x, cfg, p)
    if upstream_grad.shape != out.shape:
        raise ShapeError(f"upstream grad {upstream_grad.shape} does not match output {out.shape}")
    _, h, w, c = x.shape
    n, heads, d, g = h * w, cfg.num_heads, cfg.head_dim, cfg.window_size**2
    xf = x.reshape(n, c)
    gout = upstream_grad.reshape(n, c)

    grads = {"w_o": cache["z"].T @ gout}
    gz = (gout @ p.w_o.T).reshape(n, heads, d)

    weights = cache["weights"]
    vh = cache["values"].reshape(n, heads, d, g)
    kh = cache["keys"].reshape(n, heads, d, g)
    qh = cache["q"].reshape(n, heads, d)

    g_weights = np.einsum("nmd,nmdg->nmg", gz, vh)
    g_values = np.einsum("nmg,nmd->nmdg", weights, gz)
    g_logits = softmax_backward(weights, g_weights) / np.sqrt(d)
    g_q = np.einsum("nmg,nmdg->nmd", g_logits, kh).reshape(n, c)
    g_keys = np.einsum("nmg,nmd->nmdg", g_logits, qh)

    g_kp, g_dk = _local_features_backward(cache["kp"], cfg.window_size, p.deformed_k, cfg.use_deformed, g_keys)
    g_vp, g_dv = _local_features_backward(cache["vp"], cfg.window_size, p.deformed_v, cfg.use_deformed, g_values)
    g_kp = g_kp.reshape(n, c)
    g_vp = g_vp.reshape(n, c)

    grads["w_q"] = xf.T @ g_q
    grads["w_k"] = xf.T @ g_kp
    grads["w_v"] = xf.T @ g_vp
    if cfg.use_deformed:
        grads["deformed_k"] = g_dk
        grads["deformed_v"] = g_dv
    grad_x = g_q @ p.w_q.T + g_kp @ p.w_k.T + g_vp @ p.w_v.T
    return grad_x.reshape(x.shape), grads

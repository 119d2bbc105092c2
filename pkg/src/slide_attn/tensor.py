"""Dense-array substrate.

Tensors are C-contiguous numpy arrays of dtype float32 or float64. The
canonical feature-map layout is [N, H, W, C], so element (n, h, w, c) sits
at flat offset ((n*H + h)*W + w)*C + c. Every operation here is a pure
function: inputs are never written to.

Convolutions are cross-correlations (no kernel flip) with zero padding.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import ConfigError, ShapeError

DTYPES = (np.float32, np.float64)

_op_counter: contextvars.ContextVar[Counter | None] = contextvars.ContextVar(
    "slide_attn_op_counter", default=None
)


@contextlib.contextmanager
def count_ops() -> Iterator[Counter]:
    """Count convolution calls and multiply-accumulates inside the block.

    Keys: ``grouped_conv2d``, ``depthwise_conv2d`` (number of calls) and
    ``conv_macs`` (multiply-accumulates those calls would perform on a
    dense implementation).
    """
    counter: Counter = Counter()
    token = _op_counter.set(counter)
    try:
        yield counter
    finally:
        _op_counter.reset(token)


def _record(name: str, macs: int) -> None:
    counter = _op_counter.get()
    if counter is not None:
        counter[name] += 1
        counter["conv_macs"] += macs


def as_tensor(x, dtype=None) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float32/float64 array.

    Non-float input becomes float64 unless ``dtype`` says otherwise.
    """
    if dtype is None:
        arr = np.asarray(x)
        dtype = arr.dtype if arr.dtype in DTYPES else np.float64
    dtype = np.dtype(dtype)
    if dtype not in DTYPES:
        raise ConfigError(f"dtype must be float32 or float64, got {dtype}")
    return np.ascontiguousarray(x, dtype=dtype)


def _require_4d(t: np.ndarray, name: str = "t") -> None:
    if t.ndim != 4:
        raise ShapeError(f"{name} must be 4-D [N, H, W, C], got shape {t.shape}")


def _check_window(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ConfigError(f"window size must be odd and >= 1, got {k}")


def pad_zero(t: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    _require_4d(t)
    if pad_h < 0 or pad_w < 0:
        raise ConfigError(f"padding must be non-negative, got ({pad_h}, {pad_w})")
    n, h, w, c = t.shape
    out = np.zeros((n, h + 2 * pad_h, w + 2 * pad_w, c), dtype=t.dtype)
    out[:, pad_h : pad_h + h, pad_w : pad_w + w, :] = t
    return out


def center_crop(t: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Inverse of :func:`pad_zero`: drop ``pad_h``/``pad_w`` rows/cols per side."""
    _require_4d(t)
    h, w = t.shape[1], t.shape[2]
    if 2 * pad_h > h or 2 * pad_w > w:
        raise ShapeError(f"cannot crop ({pad_h}, {pad_w}) from spatial size ({h}, {w})")
    return np.ascontiguousarray(t[:, pad_h : h - pad_h, pad_w : w - pad_w, :])


def softmax_lastdim(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim == 0 or t.shape[-1] == 0:
        raise ShapeError(f"softmax needs a non-empty last dimension, got shape {t.shape}")
    shifted = t - t.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(y: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the softmax input given its output ``y``."""
    return y * (grad_y - (grad_y * y).sum(axis=-1, keepdims=True))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product; leading dimensions of 3-D+ inputs are batch dims."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"batch dimensions disagree: {a.shape[:-2]} vs {b.shape[:-2]}")
    return np.matmul(a, b)


def matmul_backward(a: np.ndarray, b: np.ndarray, grad_out: np.ndarray):
    """Return (grad_a, grad_b) for ``out = a @ b``."""
    grad_a = np.matmul(grad_out, np.swapaxes(b, -1, -2))
    grad_b = np.matmul(np.swapaxes(a, -1, -2), grad_out)
    if b.ndim == 2 and grad_b.ndim > 2:
        grad_b = grad_b.reshape(-1, *grad_b.shape[-2:]).sum(axis=0)
    return grad_a, grad_b


def _conv_pad(k: int, pad: int | None) -> int:
    _check_window(k)
    if pad is None:
        return k // 2
    if pad != k // 2:
        raise ConfigError(f"only same-size padding pad={k // 2} is supported for k={k}, got {pad}")
    return pad


def depthwise_conv2d(t: np.ndarray, kernel: np.ndarray, pad: int | None = None) -> np.ndarray:
    """Per-channel cross-correlation of ``t`` [N,H,W,C] with ``kernel`` [k,k,C].

    out[n,i,j,c] = sum_{p,q} kernel[p,q,c] * t[n, i+p-pad, j+q-pad, c]
    """
    _require_4d(t)
    if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"kernel must be [k, k, C], got {kernel.shape}")
    k = kernel.shape[0]
    pad = _conv_pad(k, pad)
    n, h, w, c = t.shape
    if kernel.shape[2] != c:
        raise ShapeError(f"kernel has {kernel.shape[2]} channels, input has {c}")
    _record("depthwise_conv2d", n * h * w * c * k * k)
    padded = pad_zero(t, pad, pad)
    kernel = kernel.astype(t.dtype, copy=False)
    out = np.zeros_like(t)
    for p in range(k):
        for q in range(k):
            out += padded[:, p : p + h, q : q + w, :] * kernel[p, q]
    return out


def depthwise_conv2d_backward(t, kernel, grad_out, pad: int | None = None):
    """Return (grad_t, grad_kernel) for :func:`depthwise_conv2d`."""
    g, gk = grouped_conv2d_backward(t, kernel[..., None], grad_out, pad)
    return g, gk[..., 0]


def grouped_conv2d(t: np.ndarray, kernels: np.ndarray, pad: int | None = None) -> np.ndarray:
    """Grouped convolution with G output channels per input channel.

    ``kernels`` is [k, k, C, G]. Output is [N, H, W, C*G]; output channel
    ``c*G + g`` is input channel c convolved with ``kernels[:, :, c, g]``
    (g runs fastest inside each input-channel block).
    """
    _require_4d(t)
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"kernels must be [k, k, C, G], got {kernels.shape}")
    k = kernels.shape[0]
    pad = _conv_pad(k, pad)
    n, h, w, c = t.shape
    if kernels.shape[2] != c:
        raise ShapeError(f"kernels have {kernels.shape[2]} channels, input has {c}")
    groups = kernels.shape[3]
    _record("grouped_conv2d", n * h * w * c * groups * k * k)
    t = np.ascontiguousarray(t)
    kernels = np.ascontiguousarray(kernels, dtype=t.dtype)
    if _kernels.grouped_conv_nhwc is not None:
        return _kernels.grouped_conv_nhwc(t, kernels, pad)
    return _grouped_conv_numpy(t, kernels, pad)  # pragma: no cover


def _grouped_conv_numpy(t, kernels, pad):
    n, h, w, c = t.shape
    k, groups = kernels.shape[0], kernels.shape[3]
    padded = pad_zero(t, pad, pad)
    out = np.zeros((n, h, w, c, groups), dtype=t.dtype)
    for p in range(k):
        for q in range(k):
            out += padded[:, p : p + h, q : q + w, :, None] * kernels[p, q]
    return out.reshape(n, h, w, c * groups)


def grouped_conv2d_backward(t, kernels, grad_out, pad: int | None = None):
    """Return (grad_t, grad_kernels) for :func:`grouped_conv2d`."""
    k = kernels.shape[0]
    pad = _conv_pad(k, pad)
    n, h, w, c = t.shape
    groups = kernels.shape[3]
    g = grad_out.reshape(n, h, w, c, groups)
    padded = pad_zero(t, pad, pad)
    grad_padded = np.zeros_like(padded)
    grad_k = np.zeros(kernels.shape, dtype=np.result_type(t, kernels))
    for p in range(k):
        for q in range(k):
            window = padded[:, p : p + h, q : q + w, :]
            grad_padded[:, p : p + h, q : q + w, :] += np.einsum("nhwcg,cg->nhwc", g, kernels[p, q])
            grad_k[p, q] = np.einsum("nhwc,nhwcg->cg", window, g)
    return center_crop(grad_padded, pad, pad), grad_k

"""Row-based Im2Col: feature shifts, fixed shift kernels and their fused form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .im2col import Im2ColMatrix, window_offsets
from .tensor import _check_window, _require_4d, depthwise_conv2d, grouped_conv2d


def shift_feature(f: np.ndarray, u: int, v: int) -> np.ndarray:
    """out[:, i, j] = f[:, i+u, j+v] where in range, else 0.

    Deliberately written as a bounds-checked copy rather than pad-then-slice
    so it stays independent of ``pad_zero``.
    """
    _require_4d(f, "f")
    _, h, w, _ = f.shape
    out = np.zeros_like(f)
    i0, i1 = max(0, -u), min(h, h - u)
    j0, j1 = max(0, -v), min(w, w - v)
    if i0 < i1 and j0 < j1:
        out[:, i0:i1, j0:j1, :] = f[:, i0 + u : i1 + u, j0 + v : j1 + v, :]
    return out


@dataclass(frozen=True)
class ShiftKernelBank:
    """Fixed delta kernels [k, k, C, k*k]; slice g shifts by window_offsets(k)[g]."""

    k: int
    kernels: np.ndarray

    @property
    def channels(self) -> int:
        return self.kernels.shape[2]

    def direction(self, u: int, v: int) -> np.ndarray:
        """Depthwise kernel [k, k, C] for shift (u, v)."""
        r = self.k // 2
        return self.kernels[:, :, :, (u + r) * self.k + (v + r)]


def build_shift_kernel_bank(k: int, channels: int, dtype=np.float64) -> ShiftKernelBank:
    offsets = window_offsets(k)
    r = k // 2
    kernels = np.zeros((k, k, channels, k * k), dtype=dtype)
    for g, (u, v) in enumerate(offsets):
        kernels[u + r, v + r, :, g] = 1.0
    kernels.setflags(write=False)
    return ShiftKernelBank(k, kernels)


def im2col_via_shifts(feature: np.ndarray, k: int) -> Im2ColMatrix:
    """Build the Im2Col matrix row by row from k*k shifted copies of the map."""
    _require_4d(feature, "feature")
    if feature.shape[0] != 1:
        raise ShapeError(f"expected a single image, got batch {feature.shape[0]}")
    _, h, w, c = feature.shape
    rows = [shift_feature(feature, u, v).reshape(h * w, c) for u, v in window_offsets(k)]
    return Im2ColMatrix(np.stack(rows), k, (h, w, c))


def dwconv_to_rows(conv_out: np.ndarray, k: int) -> np.ndarray:
    """Reorder grouped-conv output [1, H, W, C*k*k] into Im2Col rows [k*k, H*W, C]."""
    _, h, w, cg = conv_out.shape
    c = cg // (k * k)
    return np.ascontiguousarray(conv_out.reshape(h * w, c, k * k).transpose(2, 0, 1))


def im2col_via_dwconv(feature: np.ndarray, bank: ShiftKernelBank, fuse: bool = True) -> Im2ColMatrix:
    """Im2Col through depthwise convolution with the shift bank.

    ``fuse=True`` runs one grouped convolution; otherwise k*k separate
    depthwise convolutions, one per direction.
    """
    _require_4d(feature, "feature")
    if feature.shape[0] != 1:
        raise ShapeError(f"expected a single image, got batch {feature.shape[0]}")
    _, h, w, c = feature.shape
    if bank.channels != c:
        raise ShapeError(f"bank has {bank.channels} channels, feature has {c}")
    k = bank.k
    if fuse:
        data = dwconv_to_rows(grouped_conv2d(feature, bank.kernels), k)
    else:
        data = np.stack(
            [
                depthwise_conv2d(feature, bank.kernels[:, :, :, g]).reshape(h * w, c)
                for g in range(k * k)
            ]
        )
    return Im2ColMatrix(data, k, (h, w, c))

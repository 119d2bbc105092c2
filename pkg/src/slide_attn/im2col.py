"""Column-based Im2Col lowering and the naive local-attention reference built on it.

This is the ground truth for every faster path, so it favours plain loops
over speed: each query's window is sliced out of the padded map on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import _check_window, _require_4d, pad_zero, softmax_lastdim


def window_offsets(k: int) -> list[tuple[int, int]]:
    """Shift offsets (u, v) of a k x k window in direction-index order.

    Direction index ``(u + k//2) * k + (v + k//2)``, u-major. Im2Col rows,
    shift-kernel-bank slices and grouped-conv output groups all use this
    ordering.
    """
    _check_window(k)
    r = k // 2
    return [(u, v) for u in range(-r, r + 1) for v in range(-r, r + 1)]


def direction_index(u: int, v: int, k: int) -> int:
    r = k // 2
    return (u + r) * k + (v + r)


def window_validity(height: int, width: int, k: int) -> np.ndarray:
    """Bool [k*k, H*W]: True where key (i+u, j+v) of query (i, j) is in-bounds."""
    i = np.arange(height)[:, None]
    j = np.arange(width)[None, :]
    rows = []
    for u, v in window_offsets(k):
        ok = (i + u >= 0) & (i + u < height) & (j + v >= 0) & (j + v < width)
        rows.append(ok.reshape(-1))
    return np.stack(rows)


@dataclass(frozen=True)
class Im2ColMatrix:
    """Key/value matrix of shape [k*k, H*W, C].

    Entry (row, col, c) with row = direction_index(u, v), col = i*W + j
    holds K[i+u, j+v, c], or 0 where that position falls outside the map.
    """

    data: np.ndarray
    k: int
    origin_shape: tuple[int, int, int]

    def row(self, u: int, v: int) -> np.ndarray:
        """Row (u, v) reshaped back to [H, W, C]: the map shifted by (u, v)."""
        h, w, c = self.origin_shape
        return self.data[direction_index(u, v, self.k)].reshape(h, w, c)

    def column(self, i: int, j: int) -> np.ndarray:
        """Column of query (i, j) as a [k, k, C] window."""
        h, w, c = self.origin_shape
        return self.data[:, i * w + j, :].reshape(self.k, self.k, c)

    def valid_mask(self) -> np.ndarray:
        h, w, _ = self.origin_shape
        return window_validity(h, w, self.k)


def im2col(feature: np.ndarray, k: int) -> Im2ColMatrix:
    _check_window(k)
    _require_4d(feature, "feature")
    if feature.shape[0] != 1:
        raise ShapeError(f"im2col works on a single image, got batch {feature.shape[0]}")
    _, h, w, c = feature.shape
    r = k // 2
    padded = pad_zero(feature, r, r)[0]
    data = np.empty((k * k, h * w, c), dtype=feature.dtype)
    for i in range(h):
        for j in range(w):
            data[:, i * w + j, :] = padded[i : i + k, j : j + k, :].reshape(k * k, c)
    return Im2ColMatrix(data, k, (h, w, c))


def local_attention_reference(
    q: np.ndarray,
    kmat: Im2ColMatrix,
    vmat: Im2ColMatrix,
    head_dim: int,
    mask_padding: bool = False,
) -> np.ndarray:
    """Multi-head local attention evaluated one query at a time.

    ``q`` is [1, H, W, C]; heads split C into C // head_dim groups. With
    ``mask_padding`` off, zero-padded keys/values take part in the softmax.
    Returns the concatenated head outputs (no output projection).
    """
    _require_4d(q, "q")
    _, h, w, c = q.shape
    if kmat.origin_shape != (h, w, c) or vmat.origin_shape != (h, w, c):
        raise ShapeError(
            f"query shape {(h, w, c)} does not match key/value maps "
            f"{kmat.origin_shape} / {vmat.origin_shape}"
        )
    if kmat.k != vmat.k:
        raise ShapeError("key and value matrices use different window sizes")
    if head_dim < 1 or c % head_dim:
        raise ShapeError(f"head_dim {head_dim} does not divide channels {c}")
    heads = c // head_dim
    scale = 1.0 / np.sqrt(head_dim)
    valid = kmat.valid_mask()
    queries = q.reshape(h * w, heads, head_dim)
    out = np.empty((h * w, heads, head_dim), dtype=q.dtype)
    for n in range(h * w):
        keys = kmat.data[:, n, :].reshape(-1, heads, head_dim)
        values = vmat.data[:, n, :].reshape(-1, heads, head_dim)
        logits = np.einsum("md,gmd->mg", queries[n], keys) * scale
        if mask_padding:
            assert valid[:, n].any(), "window has no in-bounds key"
            logits = np.where(valid[:, n], logits, -np.inf)
        weights = softmax_lastdim(logits)
        out[n] = np.einsum("mg,gmd->md", weights, values)
    return out.reshape(1, h, w, c)

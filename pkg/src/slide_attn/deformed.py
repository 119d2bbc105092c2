"""Deformed shifting: fixed shift kernels plus a parallel learnable path.

Training uses both grouped convolutions and sums them. Because convolution
is linear in its kernel, the two paths collapse into one kernel
(fixed + learnable) for inference.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, StateError
from .shift import ShiftKernelBank, build_shift_kernel_bank
from .tensor import _check_window, grouped_conv2d, grouped_conv2d_backward


@dataclass(frozen=True)
class DeformedShiftParams:
    k: int
    fixed_bank: ShiftKernelBank
    learnable: np.ndarray  # [k, k, C, k*k], one kernel per direction and channel
    merged: np.ndarray | None = None

    def __post_init__(self):
        expected = (self.k, self.k, self.fixed_bank.channels, self.k * self.k)
        if self.fixed_bank.kernels.shape != expected or self.learnable.shape != expected:
            raise ShapeError(
                f"expected kernels of shape {expected}, got fixed "
                f"{self.fixed_bank.kernels.shape} and learnable {self.learnable.shape}"
            )

    @property
    def channels(self) -> int:
        return self.fixed_bank.channels

    def with_learnable(self, learnable: np.ndarray) -> DeformedShiftParams:
        return dataclasses.replace(self, learnable=np.asarray(learnable), merged=None)


def init_deformed(
    k: int, channels: int, seed: int, scale: float | None = None, dtype=np.float64
) -> DeformedShiftParams:
    """Fixed delta bank plus learnable kernels drawn from U(-scale, scale).

    ``scale`` defaults to 1/k**2, which keeps the learnable path small next
    to the shift path at initialisation.
    """
    _check_window(k)
    if scale is None:
        scale = 1.0 / (k * k)
    rng = np.random.default_rng(seed)
    learnable = rng.uniform(-scale, scale, size=(k, k, channels, k * k)).astype(dtype)
    return DeformedShiftParams(k, build_shift_kernel_bank(k, channels, dtype), learnable)


def _check_input(f: np.ndarray, p: DeformedShiftParams) -> None:
    if f.ndim != 4 or f.shape[-1] != p.channels:
        raise ShapeError(f"input {f.shape} does not match {p.channels} deformed-shift channels")


def forward_two_path(f: np.ndarray, p: DeformedShiftParams) -> np.ndarray:
    _check_input(f, p)
    return grouped_conv2d(f, p.fixed_bank.kernels) + grouped_conv2d(f, p.learnable)


def backward_two_path(f: np.ndarray, p: DeformedShiftParams, grad_out: np.ndarray):
    """Return (grad_f, grad_learnable). The fixed bank is constant: no gradient."""
    _check_input(f, p)
    grad_f_fixed, _ = grouped_conv2d_backward(f, p.fixed_bank.kernels, grad_out)
    grad_f_learn, grad_learnable = grouped_conv2d_backward(f, p.learnable, grad_out)
    return grad_f_fixed + grad_f_learn, grad_learnable


def reparameterize(p: DeformedShiftParams) -> DeformedShiftParams:
    if p.merged is not None:
        raise StateError("deformed-shift parameters are already merged")
    merged = p.fixed_bank.kernels + p.learnable
    return dataclasses.replace(p, merged=merged)


def forward_merged(f: np.ndarray, p: DeformedShiftParams) -> np.ndarray:
    if p.merged is None:
        raise StateError("call reparameterize() before forward_merged()")
    _check_input(f, p)
    return grouped_conv2d(f, p.merged)

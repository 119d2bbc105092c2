"""Compiled inner loops for the convolution hot path.

numba is optional at import time; without it the numpy tap loop in
``tensor.py`` is used instead. Both accumulate taps in the same (p, q) order
with a separate multiply and add per tap, so their results agree bit for bit.
"""

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _grouped_conv_nhwc(x, kernels, pad):
    n_batch, height, width, channels = x.shape
    k = kernels.shape[0]
    groups = kernels.shape[3]
    out = np.zeros((n_batch, height, width, channels * groups), dtype=x.dtype)
    flat_k = kernels.reshape(k, k, channels * groups)
    for n in range(n_batch):
        for i in range(height):
            for j in range(width):
                o = out[n, i, j]
                for p in range(k):
                    ii = i + p - pad
                    if ii < 0 or ii >= height:
                        continue
                    for q in range(k):
                        jj = j + q - pad
                        if jj < 0 or jj >= width:
                            continue
                        xr = x[n, ii, jj]
                        kr = flat_k[p, q]
                        for c in range(channels):
                            xv = xr[c]
                            base = c * groups
                            for g in range(groups):
                                o[base + g] += kr[base + g] * xv
    return out


if numba is not None:
    # fastmath stays off: FMA contraction would break bit-equality with the numpy path
    grouped_conv_nhwc = numba.njit(cache=True, fastmath=False, nogil=True)(_grouped_conv_nhwc)
    BACKEND = "numba-" + numba.__version__
else:  # pragma: no cover
    grouped_conv_nhwc = None
    BACKEND = "numpy"

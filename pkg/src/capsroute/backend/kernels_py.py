"""Pure numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable.
Both backends implement the same contract and the same accumulation order,
so their outputs are bit-identical (see tests/test_backend_parity.py).

All inputs must be C-contiguous float32 or float64 arrays.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Extract valid k*k patches of x[N,C,H,W] into (N, OH*OW, C*k*k).

    Per patch, features are laid out channel-major, then kernel row, then
    kernel column, matching the row-major flattening of a (C,k,k) block.
    """
    n, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(
        x,
        shape=(n, c, oh, ow, k, k),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * k * k)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, c: int, h: int, w: int, k: int, stride: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the (N,C,H,W) input grid.

    Inverse-adjoint of im2col: overlapping patches accumulate. Accumulation
    runs offset-by-offset in (ki, kj) row-major order; the compiled kernel
    uses the same order so sums agree bitwise.
    """
    n = cols.shape[0]
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    blocks = cols.reshape(n, oh, ow, c, k, k)
    dx = np.zeros((n, c, h, w), dtype=cols.dtype)
    for ki in range(k):
        for kj in range(k):
            dx[:, :, ki : ki + oh * stride : stride, kj : kj + ow * stride : stride] += (
                blocks[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
            )
    return dx


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2 over x[N,C,H,W].

    Returns (pooled, argmax) where argmax holds the row-major window index
    (0..3) of the maximum. Ties pick the first position, so gradients are
    deterministic. Odd trailing rows/columns are dropped.
    """
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    windows = (
        x[:, :, : h2 * 2, : w2 * 2]
        .reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = np.argmax(windows, axis=-1).astype(np.uint8)
    out = np.take_along_axis(windows, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(grad: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Route pooled gradients back to the argmax positions."""
    n, c, h2, w2 = grad.shape
    flat = np.zeros((n, c, h2, w2, 4), dtype=grad.dtype)
    np.put_along_axis(flat, idx[..., None].astype(np.intp), grad[..., None], axis=-1)
    dx = np.zeros((n, c, h, w), dtype=grad.dtype)
    dx[:, :, : h2 * 2, : w2 * 2] = (
        flat.reshape(n, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2 * 2, w2 * 2)
    )
    return dx

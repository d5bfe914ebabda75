"""Dense tensor operations with explicit analytic backward passes.

Tensors are C-contiguous numpy arrays, float32 for training and float64 for
gradient checking; every op runs the same code path for both. There is no
autodiff graph: each forward returns (output, cache) and has a matching
*_backward(grad, cache) that returns the input gradients.

Ops validate shapes up front and verify outputs are finite, so a NaN or Inf
surfaces at the op that produced it instead of corrupting training silently.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import NonFiniteError, ShapeError

FLOAT_DTYPES = (np.float32, np.float64)


def require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} produced non-finite values")
    return arr


def _check_dtype(name: str, *arrays: np.ndarray) -> None:
    dt = arrays[0].dtype
    if dt not in FLOAT_DTYPES:
        raise ShapeError(f"{name}: expected float32/float64 arrays, got {dt}")
    for a in arrays[1:]:
        if a.dtype != dt:
            raise ShapeError(f"{name}: mixed dtypes {dt} and {a.dtype}")


# ---------------------------------------------------------------------------
# matmul

def matmul(a: np.ndarray, b: np.ndarray):
    """Matrix product a[m,k] @ b[k,n]."""
    _check_dtype("matmul", a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    y = a @ b
    require_finite("matmul", y)
    return y, (a, b)


def matmul_backward(grad: np.ndarray, cache):
    a, b = cache
    return grad @ b.T, a.T @ grad


# ---------------------------------------------------------------------------
# conv2d (valid cross-correlation, square kernel, per-output-channel bias)

def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, stride: int = 1):
    """Valid (un-padded) cross-correlation.

    x is (C_in,H,W) or batched (N,C_in,H,W); kernels are (C_out,C_in,k,k).
    Output spatial side is floor((H-k)/stride)+1; no padding mode exists, so
    a kernel larger than the input is an error rather than an empty output.
    """
    _check_dtype("conv2d", x, kernels, bias)
    single = x.ndim == 3
    x4 = x[None] if single else x
    if x4.ndim != 4 or kernels.ndim != 4:
        raise ShapeError(f"conv2d: expected (C,H,W) input and (F,C,k,k) kernels, got {x.shape} and {kernels.shape}")
    n, c_in, h, w = x4.shape
    c_out, kc, kh, kw = kernels.shape
    if kh != kw:
        raise ShapeError(f"conv2d: kernels must be square, got {kernels.shape}")
    if kc != c_in:
        raise ShapeError(f"conv2d: input channels {x4.shape} do not match kernels {kernels.shape}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {c_out} output channels")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    if kh > h or kw > w:
        raise ShapeError(f"conv2d: kernel {kernels.shape} larger than input {x.shape}")
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    cols = backend.im2col(np.ascontiguousarray(x4), kh, stride)  # (N, P, C*k*k)
    kmat = kernels.reshape(c_out, c_in * kh * kw)
    y = np.matmul(cols, kmat.T)  # (N, P, C_out)
    y += bias
    out = np.ascontiguousarray(y.transpose(0, 2, 1)).reshape(n, c_out, oh, ow)
    require_finite("conv2d", out)
    cache = (cols, kernels, (n, c_in, h, w), stride, single)
    return (out[0] if single else out), cache


def conv2d_backward(grad: np.ndarray, cache):
    """Returns (d_input, d_kernels, d_bias)."""
    cols, kernels, (n, c_in, h, w), stride, single = cache
    g4 = grad[None] if single else grad
    c_out = kernels.shape[0]
    k = kernels.shape[2]
    p = cols.shape[1]
    gmat = np.ascontiguousarray(g4.reshape(n, c_out, p).transpose(0, 2, 1))  # (N, P, C_out)
    kmat = kernels.reshape(c_out, c_in * k * k)
    d_kernels = np.tensordot(gmat, cols, axes=((0, 1), (0, 1))).reshape(kernels.shape)
    d_bias = gmat.sum(axis=(0, 1))
    dcols = np.matmul(gmat, kmat)  # (N, P, C*k*k)
    dx = backend.col2im(np.ascontiguousarray(dcols), c_in, h, w, k, stride)
    return (dx[0] if single else dx), d_kernels, d_bias


# ---------------------------------------------------------------------------
# 2x2 max pooling, stride 2

def maxpool2(x: np.ndarray):
    """Per 2x2 window maximum; gradient goes to the first maximum per window."""
    _check_dtype("maxpool2", x)
    single = x.ndim == 3
    x4 = x[None] if single else x
    if x4.shape[2] < 2 or x4.shape[3] < 2:
        raise ShapeError(f"maxpool2: spatial dims must be >= 2, got {x.shape}")
    y, idx = backend.maxpool2_forward(np.ascontiguousarray(x4))
    cache = (idx, x4.shape[2], x4.shape[3], single)
    return (y[0] if single else y), cache


def maxpool2_backward(grad: np.ndarray, cache):
    idx, h, w, single = cache
    g4 = grad[None] if single else grad
    dx = backend.maxpool2_backward(np.ascontiguousarray(g4), idx, h, w)
    return dx[0] if single else dx


# ---------------------------------------------------------------------------
# softmax

def softmax(logits: np.ndarray, axis: int = -1):
    """Numerically stable softmax (max subtraction) along one axis."""
    _check_dtype("softmax", logits)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    require_finite("softmax", y)
    return y, (y, axis)


def softmax_backward(grad: np.ndarray, cache):
    y, axis = cache
    return y * (grad - (grad * y).sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# pointwise activations

def relu(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(grad: np.ndarray, cache):
    return grad * cache


def sigmoid(x: np.ndarray):
    _check_dtype("sigmoid", x)
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(grad: np.ndarray, cache):
    y = cache
    return grad * y * (1.0 - y)


# ---------------------------------------------------------------------------
# fully connected

def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """x[...,d_in] @ weights[d_in,d_out] + bias[d_out]."""
    _check_dtype("fully_connected", x, weights, bias)
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"fully_connected: input {x.shape} does not match weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"fully_connected: bias {bias.shape} does not match weights {weights.shape}")
    y = x @ weights + bias
    require_finite("fully_connected", y)
    return y, (x, weights)


def fully_connected_backward(grad: np.ndarray, cache):
    """Returns (d_input, d_weights, d_bias)."""
    x, weights = cache
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad.reshape(-1, grad.shape[-1])
    return grad @ weights.T, x2.T @ g2, g2.sum(axis=0)


# ---------------------------------------------------------------------------
# elementwise / reduction plumbing

def add(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return a + b, None


def add_backward(grad: np.ndarray, cache):
    return grad, grad


def scale(x: np.ndarray, alpha: float):
    return x * alpha, alpha


def scale_backward(grad: np.ndarray, cache):
    return grad * cache


def square(x: np.ndarray):
    return x * x, x


def square_backward(grad: np.ndarray, cache):
    return 2.0 * cache * grad


def reduce_sum(x: np.ndarray):
    return x.sum(), (x.shape, x.dtype)


def reduce_sum_backward(grad: float, cache):
    shape, dtype = cache
    return np.full(shape, grad, dtype=dtype)

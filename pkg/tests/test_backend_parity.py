"""The numpy and compiled kernel backends must agree bit for bit.

col2im accumulates overlapping patches in the same (ki, kj) offset order in
both implementations, so even rounding is identical; anything short of
array_equal here is a backend bug, not tolerance noise.
"""

import numpy as np
import pytest

from capsroute import backend, ops
from capsroute.rng import make_rng

needs_compiled = pytest.mark.skipif(
    "compiled" not in backend.AVAILABLE,
    reason="compiled kernel extension not built",
)


@pytest.fixture
def both_backends():
    """Yield, then restore whichever backend was active."""
    previous = backend.BACKEND
    yield
    backend.select(previous)


def _run_kernels(name, dtype, k, stride):
    backend.select(name)
    rng = make_rng(42, f"parity-{dtype.__name__}-{k}-{stride}")
    x = np.ascontiguousarray(rng.standard_normal((2, 3, 9, 9)).astype(dtype))
    cols = backend.im2col(x, k, stride)
    oh = (9 - k) // stride + 1
    dcols = np.ascontiguousarray(
        rng.standard_normal((2, oh * oh, 3 * k * k)).astype(dtype))
    dx = backend.col2im(dcols, 3, 9, 9, k, stride)
    xp = np.ascontiguousarray(rng.standard_normal((2, 3, 8, 8)).astype(dtype))
    pooled, idx = backend.maxpool2_forward(xp)
    g = np.ascontiguousarray(rng.standard_normal(pooled.shape).astype(dtype))
    dxp = backend.maxpool2_backward(g, idx, 8, 8)
    return cols, dx, pooled, idx, dxp


@needs_compiled
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride", [(3, 1), (3, 2), (5, 2)])
def test_kernels_bit_identical(both_backends, dtype, k, stride):
    py = _run_kernels("python", dtype, k, stride)
    cy = _run_kernels("compiled", dtype, k, stride)
    for a, b in zip(py, cy):
        assert a.dtype == b.dtype
        assert np.array_equal(a, b)


@needs_compiled
def test_conv2d_through_ops_bit_identical(both_backends):
    rng = make_rng(43, "parity-conv")
    x = rng.standard_normal((2, 2, 10, 10)).astype(np.float32)
    k = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    g = rng.standard_normal((2, 4, 4, 4)).astype(np.float32)

    results = {}
    for name in ("python", "compiled"):
        backend.select(name)
        y, cache = ops.conv2d(x, k, b, 2)
        dx, dk, db = ops.conv2d_backward(g, cache)
        results[name] = (y, dx, dk, db)
    for a, b2 in zip(results["python"], results["compiled"]):
        assert np.array_equal(a, b2)


def test_select_rejects_unknown(both_backends):
    with pytest.raises(ValueError):
        backend.select("gpu")


def test_python_backend_always_available():
    assert "python" in backend.AVAILABLE
    assert backend.BACKEND in backend.AVAILABLE

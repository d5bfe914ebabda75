# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch extraction/scatter and 2x2 max pooling.

Same contract and accumulation order as kernels_py, so results are
bit-identical between the two backends.
"""

import numpy as np

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1
    out = np.empty((n, oh * ow, c * k * k), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t i, ci, yo, xo, ki, kj, p, q
    with nogil:
        for i in range(n):
            for yo in range(oh):
                for xo in range(ow):
                    p = yo * ow + xo
                    q = 0
                    for ci in range(c):
                        for ki in range(k):
                            for kj in range(k):
                                o[i, p, q] = x[i, ci, yo * stride + ki, xo * stride + kj]
                                q += 1
    return out


def col2im(floating[:, :, ::1] cols, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t oh = (h - k) // stride + 1
    cdef Py_ssize_t ow = (w - k) // stride + 1
    out = np.zeros((n, c, h, w), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t i, ci, yo, xo, ki, kj
    # (ki, kj) outermost to match the numpy fallback's accumulation order.
    with nogil:
        for ki in range(k):
            for kj in range(k):
                for i in range(n):
                    for ci in range(c):
                        for yo in range(oh):
                            for xo in range(ow):
                                dx[i, ci, yo * stride + ki, xo * stride + kj] += \
                                    cols[i, yo * ow + xo, ci * k * k + ki * k + kj]
    return out


def maxpool2_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    out = np.empty((n, c, h2, w2), dtype=np.float32 if floating is float else np.float64)
    idx = np.empty((n, c, h2, w2), dtype=np.uint8)
    cdef floating[:, :, :, ::1] o = out
    cdef unsigned char[:, :, :, ::1] ix = idx
    cdef Py_ssize_t i, ci, yo, xo, j, best
    cdef floating v, bv
    with nogil:
        for i in range(n):
            for ci in range(c):
                for yo in range(h2):
                    for xo in range(w2):
                        best = 0
                        bv = x[i, ci, 2 * yo, 2 * xo]
                        for j in range(1, 4):
                            v = x[i, ci, 2 * yo + (j >> 1), 2 * xo + (j & 1)]
                            if v > bv:
                                bv = v
                                best = j
                        o[i, ci, yo, xo] = bv
                        ix[i, ci, yo, xo] = <unsigned char> best
    return out, idx


def maxpool2_backward(floating[:, :, :, ::1] grad, unsigned char[:, :, :, ::1] idx,
                      Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = grad.shape[0], c = grad.shape[1]
    cdef Py_ssize_t h2 = grad.shape[2], w2 = grad.shape[3]
    out = np.zeros((n, c, h, w), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] dx = out
    cdef Py_ssize_t i, ci, yo, xo, j
    with nogil:
        for i in range(n):
            for ci in range(c):
                for yo in range(h2):
                    for xo in range(w2):
                        j = idx[i, ci, yo, xo]
                        dx[i, ci, 2 * yo + (j >> 1), 2 * xo + (j & 1)] = grad[i, ci, yo, xo]
    return out

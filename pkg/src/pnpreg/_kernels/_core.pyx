# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: elementwise shrinkage, short-kernel convolution and
the fused dense least-squares fixed-point loop.

Semantics must match ``_fallback`` exactly (same iterates up to float
rounding, same stopping rule, same return conventions).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

DEN_SCALE = 0
DEN_SOFT_SCALE = 1


def soft_threshold(double[::1] x, double lam):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = fabs(x[i]) - lam
        if v > 0.0:
            out[i] = v if x[i] > 0.0 else -v
        else:
            out[i] = 0.0
    return out_arr


def hard_threshold(double[::1] x, double lam):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = x[i] if fabs(x[i]) > lam else 0.0
    return out_arr


def conv_window(double[::1] kernel, long offset, double[::1] x):
    """y[i] = sum_j kernel[j] * x[i - offset - j], zero-padded outside [0, n).

    Interior indices (where every tap lands in range) run branch-free; only
    the two edge bands pay the bounds test.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t K = kernel.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, src, lo, hi
    cdef double acc

    lo = offset + K - 1  # first i with all sources in range
    if lo < 0:
        lo = 0
    if lo > n:
        lo = n
    hi = n + offset      # first i past the in-range band
    if hi > n:
        hi = n
    if hi < lo:
        hi = lo

    # interior: one stride-1 accumulation pass per tap (vectorizes)
    cdef double kj
    for j in range(K):
        kj = kernel[j]
        for i in range(lo, hi):
            out[i] += kj * x[i - offset - j]
    for i in range(0, lo):
        acc = 0.0
        for j in range(K):
            src = i - offset - j
            if 0 <= src < n:
                acc += kernel[j] * x[src]
        out[i] = acc
    for i in range(hi, n):
        acc = 0.0
        for j in range(K):
            src = i - offset - j
            if 0 <= src < n:
                acc += kernel[j] * x[src]
        out[i] = acc
    return out_arr


def conv_circular(double[::1] kernel, long offset, double[::1] x):
    """y[i] = sum_j kernel[j] * x[(i - offset - j) mod n]; same interior
    fast path as conv_window, wrapping only in the edge bands."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t K = kernel.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, lo, hi
    cdef long src
    cdef double acc

    lo = offset + K - 1
    if lo < 0:
        lo = 0
    if lo > n:
        lo = n
    hi = n + offset
    if hi > n:
        hi = n
    if hi < lo:
        hi = lo

    cdef double kj
    for j in range(K):
        kj = kernel[j]
        for i in range(lo, hi):
            out[i] += kj * x[i - offset - j]
    for i in range(0, lo):
        acc = 0.0
        for j in range(K):
            src = (i - offset - j) % n
            if src < 0:
                src += n
            acc += kernel[j] * x[src]
        out[i] = acc
    for i in range(hi, n):
        acc = 0.0
        for j in range(K):
            src = (i - offset - j) % n
            if src < 0:
                src += n
            acc += kernel[j] * x[src]
        out[i] = acc
    return out_arr


def fbs_dense(double[:, ::1] G, double[::1] b, double s, int den_code,
              double p1, double p2, double[::1] x0, double threshold,
              long max_iter):
    """Fused iteration x <- denoise(x - s*(G x - b)) until the step residual
    drops to ``threshold``.

    Returns (x, n_iter, residuals, converged).
    """
    cdef Py_ssize_t n = x0.shape[0]
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    res_arr = np.empty(max_iter, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] res = res_arr
    w_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] w = w_arr
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double acc, v, r, d
    cdef bint converged = False

    while it < max_iter:
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += G[i, j] * x[j]
            w[i] = x[i] - s * (acc - b[i])
        r = 0.0
        if den_code == DEN_SCALE:
            for i in range(n):
                v = p1 * w[i]
                d = v - x[i]
                r += d * d
                x[i] = v
        else:  # DEN_SOFT_SCALE
            for i in range(n):
                v = fabs(w[i]) - p1
                if v > 0.0:
                    v = v if w[i] > 0.0 else -v
                else:
                    v = 0.0
                v *= p2
                d = v - x[i]
                r += d * d
                x[i] = v
        r = sqrt(r)
        res[it] = r
        it += 1
        if r <= threshold:
            converged = True
            break

    return x_arr, it, res_arr[:it].copy(), converged

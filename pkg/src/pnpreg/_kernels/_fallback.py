"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or disabled via
PNPREG_PURE_PYTHON=1. Must mirror ``_core`` semantics exactly.
"""

import numpy as np

DEN_SCALE = 0
DEN_SOFT_SCALE = 1


def soft_threshold(x, lam):
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def hard_threshold(x, lam):
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) > lam, x, 0.0)


def conv_window(kernel, offset, x):
    """y[i] = sum_j kernel[j] * x[i - offset - j], zero-padded outside [0, n)."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    n = x.shape[0]
    full = np.convolve(kernel, x)  # full[m] = sum_j k[j] x[m-j], m in [0, n+K-2]
    out = np.zeros(n)
    # y[i] = full[i - offset]
    lo = max(0, offset)
    hi = min(n, full.shape[0] + offset)
    if lo < hi:
        out[lo:hi] = full[lo - offset:hi - offset]
    return out


def conv_circular(kernel, offset, x):
    """y[i] = sum_j kernel[j] * x[(i - offset - j) mod n]."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    n = x.shape[0]
    full = np.convolve(kernel, x)
    out = np.zeros(n)
    for m in range(full.shape[0]):
        out[(m + offset) % n] += full[m]
    return out


def fbs_dense(G, b, s, den_code, p1, p2, x0, threshold, max_iter):
    """Fused iteration x <- denoise(x - s*(G x - b)); see _core.fbs_dense."""
    x = np.array(x0, dtype=np.float64, copy=True)
    residuals = np.empty(max_iter)
    it = 0
    converged = False
    while it < max_iter:
        w = x - s * (G @ x - b)
        if den_code == DEN_SCALE:
            xn = p1 * w
        else:  # DEN_SOFT_SCALE
            xn = p2 * soft_threshold(w, p1)
        r = float(np.linalg.norm(xn - x))
        residuals[it] = r
        x = xn
        it += 1
        if r <= threshold:
            converged = True
            break
    return x, it, residuals[:it].copy(), converged

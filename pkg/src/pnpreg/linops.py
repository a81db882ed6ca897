"""Finite-dimensional model of the reconstruction spaces.

Vectors are plain 1-D float64 numpy arrays with the Euclidean inner product.
Sequence-space examples live on a truncated index window (default length
4096) with zero padding; at that scale weak and norm convergence coincide,
which is what every harness in this package relies on.

Linear operators come in three kinds: dense matrices, discrete convolutions
(circular or zero-padded window) and diagonal-in-a-unitary-basis. Each
carries a certified upper bound on its operator norm (``norm_bound``), an
adjoint, and a JSON serialization.

Operators are immutable after construction (internal caches are idempotent)
and every operation is pure, so concurrent use needs no synchronization.
"""

from __future__ import annotations

import json

import numpy as np

from . import _kernels

DEFAULT_WINDOW = 4096
SVD_ORACLE_LIMIT = 200

_BOUND_HEADROOM = 1.0 + 1e-12  # absorbs rounding in certified norm bounds


class DimensionMismatch(ValueError):
    pass


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and convert to a finite 1-D float64 array."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {v.shape[0]}")
    return v


def norm(x) -> float:
    return float(np.linalg.norm(x))


def inner(x, y) -> float:
    return float(np.dot(x, y))


class LinearOperator:
    """Base class: bounded linear map with adjoint and certified norm bound."""

    kind = "abstract"

    def __init__(self, in_dim: int, out_dim: int, norm_bound: float):
        if in_dim < 1 or out_dim < 1:
            raise ValueError("dimensions must be positive")
        if norm_bound < 0:
            raise ValueError("norm_bound must be nonnegative")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.norm_bound = float(norm_bound)

    def apply(self, x) -> np.ndarray:
        raise NotImplementedError

    def adjoint_apply(self, y) -> np.ndarray:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def as_matrix(self) -> np.ndarray:
        """Materialize by applying to the standard basis."""
        cols = [self.apply(_basis(self.in_dim, j)) for j in range(self.in_dim)]
        return np.column_stack(cols)


def _basis(n, j):
    e = np.zeros(n)
    e[j] = 1.0
    return e


class DenseOperator(LinearOperator):
    kind = "dense-matrix"

    def __init__(self, matrix):
        m = np.ascontiguousarray(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("matrix must be 2-D")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        self.matrix = m
        bound = float(np.linalg.norm(m, 2)) * _BOUND_HEADROOM
        super().__init__(m.shape[1], m.shape[0], bound)
        self._gram = None

    def apply(self, x):
        return self.matrix @ as_vector(x, self.in_dim)

    def adjoint_apply(self, y):
        return self.matrix.T @ as_vector(y, self.out_dim)

    def gram(self) -> np.ndarray:
        """A^T A, cached (operators are immutable)."""
        if self._gram is None:
            self._gram = np.ascontiguousarray(self.matrix.T @ self.matrix)
        return self._gram

    def to_config(self):
        return {
            "kind": self.kind,
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "matrix": self.matrix.tolist(),
        }

    @staticmethod
    def identity(n):
        return DenseOperator(np.eye(n))

    @staticmethod
    def from_operator(op: LinearOperator) -> "DenseOperator":
        return DenseOperator(op.as_matrix())


class ConvolutionOperator(LinearOperator):
    """Discrete convolution y = k * x on a length-n window.

    ``mode="circular"`` wraps indices; ``mode="truncated-Z"`` zero-pads, i.e.
    the compression of the doubly-infinite convolution to the window. The
    kernel covers lags offset .. offset+len(kernel)-1. Kernel taps with
    magnitude below ``tail_tol`` are dropped from the ends.
    """

    def __init__(self, kernel, n: int, mode: str = "circular", offset: int = 0,
                 tail_tol: float = 1e-14):
        if mode not in ("circular", "truncated-Z"):
            raise ValueError(f"unknown convolution mode {mode!r}")
        k = np.ascontiguousarray(kernel, dtype=np.float64)
        if k.ndim != 1 or k.size == 0:
            raise ValueError("kernel must be a non-empty 1-D vector")
        k, offset = _trim_kernel(k, int(offset), tail_tol)
        self.kernel = k
        self.offset = offset
        self.mode = mode
        bound = self._certified_bound(k, offset, n, mode)
        super().__init__(n, n, bound)

    @staticmethod
    def _certified_bound(k, offset, n, mode):
        # Young's inequality: ||K|| <= ||k||_1, which also dominates the
        # symbol sup (hence any sampled symbol magnitude). Tight for
        # nonnegative kernels, where the symbol peaks at z = 1. The circulant
        # spectrum (symbol at the n-th roots) sits below it as well.
        return float(np.abs(k).sum()) * _BOUND_HEADROOM

    def eigenvalues(self) -> np.ndarray:
        """Circulant spectrum: the symbol at the n-th roots of unity."""
        if self.mode != "circular":
            raise TypeError("eigenvalues exist for the circular mode only")
        return self.symbol(2.0 * np.pi * np.arange(self.in_dim) / self.in_dim)

    def apply(self, x):
        x = as_vector(x, self.in_dim)
        if self.mode == "circular":
            return _kernels.conv_circular(self.kernel, self.offset, x)
        return _kernels.conv_window(self.kernel, self.offset, x)

    def adjoint_apply(self, y):
        y = as_vector(y, self.out_dim)
        k_rev = np.ascontiguousarray(self.kernel[::-1])
        off_rev = -(self.offset + self.kernel.shape[0] - 1)
        if self.mode == "circular":
            return _kernels.conv_circular(k_rev, off_rev, y)
        return _kernels.conv_window(k_rev, off_rev, y)

    def symbol(self, thetas) -> np.ndarray:
        """Fourier symbol at angles theta, by direct summation."""
        return _symbol_at(self.kernel, self.offset, np.asarray(thetas, dtype=np.float64))

    def symbol_max(self, samples: int = 1024) -> float:
        thetas = 2.0 * np.pi * np.arange(samples) / samples
        return float(np.abs(self.symbol(thetas)).max())

    def to_config(self):
        return {
            "kind": "convolution",
            "mode": self.mode,
            "n": self.in_dim,
            "offset": self.offset,
            "kernel": self.kernel.tolist(),
        }


def _trim_kernel(k, offset, tol):
    nz = np.nonzero(np.abs(k) > tol)[0]
    if nz.size == 0:
        return np.zeros(1), offset
    lo, hi = int(nz[0]), int(nz[-1])
    return np.ascontiguousarray(k[lo:hi + 1]), offset + lo


def _symbol_at(k, offset, thetas):
    lags = offset + np.arange(k.shape[0])
    return np.exp(-1j * np.outer(thetas, lags)) @ k


class DiagonalInBasisOperator(LinearOperator):
    """A = U diag(m) U* for a unitary U (verified on probes at construction)."""

    kind = "diagonal-in-basis"

    def __init__(self, unitary: LinearOperator, multipliers, check_probes: int = 16):
        if unitary.in_dim != unitary.out_dim:
            raise ValueError("unitary factor must be square")
        m = as_vector(multipliers, unitary.in_dim)
        _check_unitary(unitary, check_probes)
        self.unitary = unitary
        self.multipliers = m
        bound = float(np.abs(m).max()) * _BOUND_HEADROOM
        super().__init__(unitary.in_dim, unitary.in_dim, bound)

    def apply(self, x):
        x = as_vector(x, self.in_dim)
        return self.unitary.apply(self.multipliers * self.unitary.adjoint_apply(x))

    def adjoint_apply(self, y):
        # real multipliers: self-adjoint
        return self.apply(y)

    def to_config(self):
        return {
            "kind": self.kind,
            "unitary": self.unitary.to_config(),
            "multipliers": self.multipliers.tolist(),
        }


def _check_unitary(u: LinearOperator, probes: int, tol: float = 1e-10):
    rng = np.random.default_rng(0)
    for _ in range(probes):
        x = rng.standard_normal(u.in_dim)
        back = u.adjoint_apply(u.apply(x))
        if norm(back - x) > tol * (1.0 + norm(x)):
            raise ValueError("operator is not unitary (U*U != Id on probes)")


def estimate_norm(A: LinearOperator, iters: int = 100) -> float:
    """Power-iteration estimate of the operator norm (a lower bound)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(0)
    v = rng.standard_normal(A.in_dim)
    nv = norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    est = 0.0
    for _ in range(iters):
        u = A.apply(v)
        est = norm(u)
        if est == 0.0:
            return 0.0
        v = A.adjoint_apply(u)
        nv = norm(v)
        if nv == 0.0:
            return est
        v /= nv
    return est


class SVDResult:
    def __init__(self, U, s, Vt):
        self.U = U
        self.s = s
        self.Vt = Vt


def svd_small(A: LinearOperator, limit: int = SVD_ORACLE_LIMIT) -> SVDResult:
    """Full SVD oracle for small dense operators."""
    if A.kind != "dense-matrix":
        raise TypeError("svd_small requires a dense-matrix operator")
    if max(A.in_dim, A.out_dim) > limit:
        raise ValueError(f"dimensions exceed the oracle limit {limit}")
    U, s, Vt = np.linalg.svd(A.matrix, full_matrices=True)
    return SVDResult(U, s, Vt)


def _kernel_basis(A: LinearOperator):
    dec = svd_small(A)
    smax = dec.s[0] if dec.s.size else 0.0
    tol = max(A.in_dim, A.out_dim) * np.finfo(np.float64).eps * max(smax, 1e-300)
    rank = int(np.sum(dec.s > tol))
    return dec.Vt[rank:].T  # columns span ker(A)


def project_kernel(A: LinearOperator, v) -> np.ndarray:
    """Orthogonal projection of v onto ker(A), via the SVD oracle."""
    v = as_vector(v, A.in_dim)
    V0 = _kernel_basis(A)
    if V0.shape[1] == 0:
        return np.zeros_like(v)
    return V0 @ (V0.T @ v)


def pseudo_solve(A: LinearOperator, y) -> np.ndarray:
    """Minimum-norm least-squares solution A^+ y, via the SVD oracle."""
    y = as_vector(y, A.out_dim)
    dec = svd_small(A)
    smax = dec.s[0] if dec.s.size else 0.0
    tol = max(A.in_dim, A.out_dim) * np.finfo(np.float64).eps * max(smax, 1e-300)
    coeffs = dec.U.T[:dec.s.size] @ y
    inv = np.where(dec.s > tol, coeffs / np.where(dec.s > tol, dec.s, 1.0), 0.0)
    return dec.Vt[:dec.s.size].T @ inv


def operator_to_json(A: LinearOperator) -> str:
    return json.dumps(A.to_config(), sort_keys=True)


def operator_from_config(cfg: dict) -> LinearOperator:
    kind = cfg.get("kind")
    if kind == "dense-matrix":
        return DenseOperator(np.asarray(cfg["matrix"], dtype=np.float64))
    if kind == "convolution":
        return ConvolutionOperator(
            np.asarray(cfg["kernel"], dtype=np.float64),
            n=int(cfg["n"]),
            mode=cfg["mode"],
            offset=int(cfg.get("offset", 0)),
        )
    if kind == "diagonal-in-basis":
        return DiagonalInBasisOperator(
            operator_from_config(cfg["unitary"]),
            np.asarray(cfg["multipliers"], dtype=np.float64),
        )
    raise ValueError(f"unknown operator kind {kind!r}")


def operator_from_json(text: str) -> LinearOperator:
    return operator_from_config(json.loads(text))

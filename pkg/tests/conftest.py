import numpy as np
import pytest

from pnpreg import DenseOperator


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dense(rng, m, n, norm_cap=None):
    """Random dense operator, optionally rescaled to a target spectral norm."""
    A = rng.standard_normal((m, n))
    if norm_cap is not None:
        A *= norm_cap / np.linalg.norm(A, 2)
    return DenseOperator(A)


def rank_deficient_dense(rng, n, rank, smin=0.8, smax=1.0):
    """Square operator with a clean rank-``rank`` spectrum in [smin, smax]."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    svals = np.concatenate([np.linspace(smax, smin, rank), np.zeros(n - rank)])
    return DenseOperator(U @ np.diag(svals) @ V.T)

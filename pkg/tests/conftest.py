import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_subspace_matrix(rng, n, d):
    """Orthonormal (n, d) matrix from a QR factorization (independent of the package)."""
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q

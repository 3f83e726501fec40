import numpy as np
import pytest

from kapcpd.kernels import EXTERNAL, KernelMatrix


def random_kernel(n: int, rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0) -> KernelMatrix:
    """A generic symmetric kernel with entries in [lo, hi], diagonal 1."""
    m = rng.uniform(lo, hi, size=(n, n))
    m = (m + m.T) / 2.0
    np.fill_diagonal(m, 1.0)
    return KernelMatrix(m, EXTERNAL)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

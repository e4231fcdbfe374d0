import numpy as np
import pytest

from blockrnn.linalg import Rng


@pytest.fixture
def rng():
    """Fresh deterministic generator per test."""
    return Rng(0)


def random_matrix(seed: int, d: int, scale: float = 1.0) -> np.ndarray:
    return Rng(seed).gaussian(0.0, scale, (d, d))

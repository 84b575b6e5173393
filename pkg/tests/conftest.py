import numpy as np
import pytest

from wpt.backend import compiled_available
from wpt.mixture_targets import gaussian_mixture


@pytest.fixture
def pair_1d():
    """Separated 1-d pair: w = (0.2, 0.8), N(-10, 9), N(10, 1)."""
    return gaussian_mixture([0.2, 0.8], [[-10.0], [10.0]], [[[9.0]], [[1.0]]])


@pytest.fixture
def two_mode_10d():
    d = 10
    return gaussian_mixture([0.2, 0.8], [np.full(d, -10.0), np.full(d, 10.0)],
                            [9.0 * np.eye(d), np.eye(d)])


needs_compiled = pytest.mark.skipif(not compiled_available(), reason="compiled extension not built")

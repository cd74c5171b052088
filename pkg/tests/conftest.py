import numpy as np
import pytest

from pdeforge.spectral import Field, make_grid


@pytest.fixture
def grid16():
    return make_grid(16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, channels=1, seed=0, dtype=np.float64):
    gen = np.random.default_rng(seed)
    data = gen.standard_normal((channels,) + grid.shape).astype(dtype)
    return Field(data, grid)

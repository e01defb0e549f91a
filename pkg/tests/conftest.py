import numpy as np
import pytest

from viscoflow import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture
def grid2d():
    return Grid(2, 32, length=8.0)


@pytest.fixture
def grid2d_unit():
    return Grid(2, 32, length=1.0)


@pytest.fixture
def grid3d():
    return Grid(3, 16, length=4.0)

import numpy as np
import pytest

from bohmion_dyn.kernels import Kernel
from bohmion_dyn.numerics import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid1d():
    return Grid.uniform(-8.0, 8.0, 256)


@pytest.fixture
def gauss1d():
    return Kernel("gaussian", 0.5, 1)

import numpy as np
import pytest

from gtasim.geometry import ArrayShape


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ARRAY_8 = ArrayShape(8, 8, (1, 1))
ARRAY_16 = ArrayShape(16, 16, (2, 2))
ARRAY_8x32 = ArrayShape(8, 32, (1, 4))

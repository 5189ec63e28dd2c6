import numpy as np
import pytest

from sfgilbert.sampling import instance_from_points


@pytest.fixture
def three_points():
    """x1=((0,0),5), x2=((3,0),1), x3=((3.5,0),0.5) on the n=20 torus; ids 0, 1, 2."""
    return instance_from_points([((0.0, 0.0), 5.0), ((3.0, 0.0), 1.0), ((3.5, 0.0), 0.5)], 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest

from onlineltl.certify import random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def instance(rng):
    return random_instance(rng)

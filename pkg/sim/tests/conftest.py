# sim/tests/conftest.py
import numpy as np
import pytest

from sim.services.hand import default_hand
from sim.tests.factories import make_sphere


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def hand():
    return default_hand()


@pytest.fixture
def sphere():
    return make_sphere(0.03)

# learning/tests/conftest.py
import numpy as np
import pytest

from learning.tests.factories import tiny_config


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def cfg():
    return tiny_config()

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def seed_global_rng():
    np.random.seed(0)
    yield

import numpy as np
import pytest

from reserve_shift.simcore import SimConfig


@pytest.fixture
def small_config():
    return SimConfig(n_countries=40, horizon_months=240, runs=4, min_degree=5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from genwave.gennum import DEFAULT_GRID, EpsGrid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid():
    return DEFAULT_GRID


@pytest.fixture
def small_grid():
    return EpsGrid(0.5, 0.7, 8)


def power(c, a):
    return lambda e: c * np.asarray(e, dtype=float) ** a

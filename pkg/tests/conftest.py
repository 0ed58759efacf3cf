import numpy as np
import pytest

from gencomm.schedule import build_schedule


@pytest.fixture(scope="session")
def sched():
    """Default 1000-step linear schedule shared across tests."""
    return build_schedule()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


class ZeroNoise:
    """Stand-in random stream that always draws zeros."""

    def standard_normal(self, shape=None):
        return np.zeros(shape if shape is not None else ())

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hurricane_uwb.params import Position, Rain, builtin_tables

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALL_KEYS = [(p, r) for p in Position for r in Rain]


@pytest.fixture(scope="session")
def tables():
    return builtin_tables()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

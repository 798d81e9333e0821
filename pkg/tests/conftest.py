import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from newsmech.newsutil import DiscreteDistribution

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def discrete(draw, min_atoms=1, max_atoms=6, lo=-5.0, hi=5.0):
    k = draw(st.integers(min_atoms, max_atoms))
    values = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=k, max_size=k))
    weights = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    w = np.asarray(weights)
    return DiscreteDistribution(np.round(values, 4), w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

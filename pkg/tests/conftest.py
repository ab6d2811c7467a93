import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heattap.layout import default_layout
from heattap.synth import SynthConfig, generate_dataset

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def layout():
    return default_layout()


@pytest.fixture(scope="session")
def small_taps(layout):
    """Six users, a few hundred taps each."""
    return generate_dataset(layout, SynthConfig(seed=3, n_users=6, taps_per_user=300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wsrm.network import NetworkConfig, generate_rayleigh_channels, rng_stream

settings.register_profile("wsrm", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("wsrm")


@pytest.fixture
def single_cell():
    cfg = NetworkConfig.single_cell(4, 4, 10.0)
    return cfg, generate_rayleigh_channels(cfg, rng_stream(11, 0, 0))


@pytest.fixture
def two_cell():
    cfg = NetworkConfig.multicell(2, 8, 2, 10 ** 1.2, weights=(0.14, 0.21, 0.28, 0.36))
    return cfg, generate_rayleigh_channels(cfg, rng_stream(11, 1, 0))


def complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

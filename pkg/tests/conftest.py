import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eeba.channel import ArrayConfig, ScattererScenario, generate_channel
from eeba.transceiver import ideal_combiner

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_array():
    return ArrayConfig(num_tx_antennas=8, num_rx_antennas=16)


@pytest.fixture(scope="session")
def chan4():
    return generate_channel(ArrayConfig(), ScattererScenario(), seed=11, n_streams=4)


@pytest.fixture(scope="session")
def chan8():
    return generate_channel(ArrayConfig(), ScattererScenario(), seed=5, n_streams=8)


@pytest.fixture(scope="session")
def ideal4(chan4):
    return ideal_combiner(chan4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from photonstat.chain import ChainParams
from photonstat.emission import PulseTrainSpec
from photonstat.pipeline import default_mode


def pytest_configure(config):
    np.seterr(over="raise", invalid="raise")


@pytest.fixture(scope="session")
def mode():
    return default_mode()


@pytest.fixture(scope="session")
def spec():
    return PulseTrainSpec()


@pytest.fixture(scope="session")
def spec8():
    return PulseTrainSpec.eight_pulse()


@pytest.fixture(scope="session")
def chain():
    return ChainParams()


@pytest.fixture(scope="session")
def chain8():
    return ChainParams(trace_len=1120)

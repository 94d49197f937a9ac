import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vfvm.errors import NegativeContribution

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet_negative():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeContribution)
        yield


def unit_triangle():
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def equilateral():
    return np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

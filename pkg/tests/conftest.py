import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ratexp.sample_io import PooledSample

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def canonical():
    """D=(1,1,0,0), values (0,2,1,1): outcomes are a spread of the beliefs."""
    return PooledSample.from_arrays([0.0, 2.0], [1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

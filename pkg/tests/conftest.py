import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ldceval.features import DepartureEvent, FeatureVector
from ldceval.synthesis import reconstruct_event

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.lines():
            terminalreporter.write_line(line)


@pytest.fixture
def xi():
    return FeatureVector(T=4.0, d_y=0.6, sigma_y=0.03, v_bar=20.0, a_bar=0.2, sigma_v=0.1,
                         c0=1e-3, delta_c=-4e-4)


@pytest.fixture
def noiseless_event(xi):
    return reconstruct_event(xi, 0.05, noise=False, event_id="fixture")


@pytest.fixture
def flat_event():
    t = np.linspace(0.0, 3.0, 31)
    return DepartureEvent(t, 0.5 * np.sin(np.pi * t / 3.0), np.full_like(t, 15.0), np.zeros_like(t))

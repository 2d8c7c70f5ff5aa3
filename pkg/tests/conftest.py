import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnle.grid import Interval, Parameters, build_domain
from dnle.stationary import compute_first_eigenpair, compute_profile_f

settings.register_profile(
    "dnle", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("dnle-long", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dnle"))


@pytest.fixture(scope="session")
def unit129():
    return build_domain(Interval(1.0), 129)


@pytest.fixture(scope="session")
def unit257():
    return build_domain(Interval(1.0), 257)


@pytest.fixture(scope="session")
def pme():
    return Parameters(2.0, 2.0)


@pytest.fixture(scope="session")
def pme_profile(pme, unit257):
    return compute_profile_f(pme, unit257)


@pytest.fixture(scope="session")
def heat_eigen(unit257):
    return compute_first_eigenpair(2.0, unit257, tolerance=1e-10)


@pytest.fixture(scope="session")
def plap3_eigen(unit257):
    return compute_first_eigenpair(3.0, unit257, tolerance=1e-10)


def bump(x, center=0.5, width=0.25, amplitude=1.0):
    """C1 bump amplitude * (1 - ((x-c)/w)^2)_+^2."""
    return amplitude * np.clip(1.0 - ((x - center) / width) ** 2, 0.0, None) ** 2


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(k))

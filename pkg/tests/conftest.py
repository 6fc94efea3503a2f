import pytest
from hypothesis import HealthCheck, settings

from epicampaign.network import build_poisson_truncated, build_powerlaw
from epicampaign.pmp import fbs_solve
from epicampaign.scenario import Scenario

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE = []


def record_acceptance(number, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    _ACCEPTANCE.append((number, line))
    print(line)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda t: t[0]):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def er_dist():
    return build_poisson_truncated(33.45, 13, 54)


@pytest.fixture(scope="session")
def pl2_dist():
    return build_powerlaw(2.0, 14, 120)


@pytest.fixture(scope="session")
def er_scn(er_dist):
    return Scenario(er_dist)


@pytest.fixture(scope="session")
def pl2_scn(pl2_dist):
    return Scenario(pl2_dist)


@pytest.fixture(scope="session")
def er_solution(er_scn):
    return fbs_solve(er_scn)


@pytest.fixture(scope="session")
def pl2_solution(pl2_scn):
    return fbs_solve(pl2_scn)

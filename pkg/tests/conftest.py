import os

import pytest
from hypothesis import HealthCheck, settings

from pamlab.potential import PotentialDistribution, ScaleTable

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def triple():
    return PotentialDistribution.triple_exp(1.0)


@pytest.fixture(scope="session")
def table(triple):
    return ScaleTable(triple)


# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

def pytest_configure(config):
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    item.config._acceptance[n] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    res = getattr(config, "_acceptance", {})
    if not res:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(res):
        title, status, detail = res[n]
        terminalreporter.write_line(f"{status} criterion {n:2d} ({title}): {detail}")

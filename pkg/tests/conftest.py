import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


_CRITERIA: dict[int, dict] = {}


@pytest.fixture
def measured(request):
    """Record measured quantities shown next to the criterion verdict."""
    details: dict = {}
    request.node.user_properties.append(("measured", details))
    return details


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "details": {}})
    if report.failed:
        entry["ok"] = False
    for key, value in item.user_properties:
        if key == "measured":
            entry["details"].update(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        verdict = "PASS" if entry["ok"] else "FAIL"
        extra = ", ".join(f"{k}={_fmt(v)}" for k, v in entry["details"].items())
        terminalreporter.write_line(f"{verdict} criterion {number}: {entry['title']}" + (f" [{extra}]" if extra else ""))


def _fmt(value):
    return f"{value:.3g}" if isinstance(value, float) else str(value)

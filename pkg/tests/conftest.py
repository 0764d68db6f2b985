import os

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on its own."""
    def record(name, ok, detail):
        line = "%-4s %s  %s" % (name, "PASS" if ok else "FAIL", detail)
        _CRITERIA.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# one pass/fail line per acceptance criterion, printed after the run
_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{text} [{'ok' if passed else 'FAIL'}]" for text, passed in checks)
        store[number] = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])

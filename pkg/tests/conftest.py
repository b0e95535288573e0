import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE_RESULTS = {}
_SESSION = {}


def pytest_sessionstart(session):
    import time

    _SESSION["start"] = time.perf_counter()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time

    if not ACCEPTANCE_RESULTS:
        return
    if "start" in _SESSION:
        elapsed = time.perf_counter() - _SESSION["start"]
        module_failures = [
            r for r in terminalreporter.stats.get("failed", []) if "test_acceptance" not in r.nodeid
        ]
        ok = not module_failures and elapsed < 600
        ACCEPTANCE_RESULTS[10] = (
            ok,
            f"module suites: {len(module_failures)} failures; full suite {elapsed:.0f} s (budget 600 s)",
        )
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

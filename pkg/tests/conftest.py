"""Acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary.

Tests opt in with ``@pytest.mark.criterion(n, title)`` and may put a
short ``detail`` string into the ``details`` fixture.
"""

import pytest

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.fixture
def details():
    return {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    n, title = marker.args
    if report.when == "setup" and report.passed:
        return
    detail = item.funcargs.get("details", {}).get("detail", "") if hasattr(item, "funcargs") else ""
    ACCEPTANCE[n] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))

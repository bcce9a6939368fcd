"""Collects one verdict line per acceptance criterion and prints them at
the end of the session."""

import pytest

VERDICTS = {}


def record(criterion, passed, detail):
    VERDICTS[criterion] = (bool(passed), detail)
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    return line


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(VERDICTS):
        passed, detail = VERDICTS[c]
        terminalreporter.write_line(f"criterion {c}: {'PASS' if passed else 'FAIL'} - {detail}")

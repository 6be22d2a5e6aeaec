"""Shared pytest wiring.

The acceptance suite records one verdict line per criterion; printing them
from a terminal-summary hook keeps the lines visible even though pytest
captures per-test stdout.
"""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record a pass/fail verdict for one acceptance criterion, then assert.

    Recording happens before the assert so a failing criterion still shows
    up in the end-of-run summary with its detail string.
    """
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

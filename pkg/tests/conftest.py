"""Shared test plumbing.

The acceptance module records one verdict line per criterion; echoing
them in the terminal summary keeps the pass/fail ledger visible even
with output capture on.
"""

ACCEPTANCE_LINES = []


def record_verdict(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

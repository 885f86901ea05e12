import pytest

import desk

# One line per acceptance criterion, filled in by test_acceptance.py.
CRITERIA: dict[int, str] = {}


@pytest.fixture(scope="session")
def desk_sweep():
    table, timing = desk.desk_sweep()
    return table, timing


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])

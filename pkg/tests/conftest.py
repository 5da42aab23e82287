import pytest

acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared collector; test_acceptance appends one verdict line per criterion."""
    return acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)

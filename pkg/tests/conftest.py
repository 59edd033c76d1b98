import pytest

_LINES = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return _LINES


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)

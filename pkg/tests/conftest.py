import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on its own."""

    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

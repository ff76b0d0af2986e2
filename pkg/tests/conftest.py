import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and fail the test if needed."""

    def report(number, ok, detail):
        line = "criterion %2d: %s  %s" % (number, "PASS" if ok else "FAIL", detail)
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import pytest

_CRITERIA: list = []


@pytest.fixture
def criterion():
    """Record ``(label, passed, detail)`` for the end-of-run criterion table."""

    def record(label, passed, detail=""):
        line = f"{label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

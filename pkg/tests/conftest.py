import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and print a one-line PASS/FAIL verdict for a numbered acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance")
    for number in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[number])

import pytest

_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed in the summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        _LINES[number] = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
        print(_LINES[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_LINES):
            terminalreporter.write_line(_LINES[k])

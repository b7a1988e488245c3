import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are printed in the terminal summary."""
    def emit(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

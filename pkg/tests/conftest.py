import pytest

_acceptance_lines = []


@pytest.fixture
def acceptance_recorder():
    """Collect one PASS/FAIL line per criterion for the terminal summary."""

    def record(num: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"ACCEPTANCE {num} [{name}]: {'PASS' if ok else 'FAIL'}  {detail}"
        _acceptance_lines.append((num, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)

import pytest

# Filled by tests/test_acceptance.py; one (criterion, passed, detail) per check.
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def acceptance_line():
    def record(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append((name, bool(ok), detail))
        return ok

    return record

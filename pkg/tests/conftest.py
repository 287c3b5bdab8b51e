import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion(capsys):
    """Store one pass/fail line per acceptance criterion; printed in the terminal summary."""
    def record(key: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE[key] = line
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0].rstrip("ab")), k)):
        terminalreporter.write_line(ACCEPTANCE[key])

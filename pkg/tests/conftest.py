"""Collects the one-line acceptance verdicts and prints them after the run."""
import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Call ``verdict(cid, ok, detail)`` once per criterion."""

    def record(cid: str, ok: bool, detail: str):
        line = f"ACCEPTANCE {cid:>3} {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def default_run():
    """Default synthetic network, its traces and a full pipeline run (topology, traces, run)."""
    from posroute.inference import run_default
    return run_default()


ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion, then assert it."""
    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

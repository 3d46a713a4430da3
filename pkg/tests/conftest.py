"""Shared fixtures and the per-criterion report printed after the acceptance run."""
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("zerolap", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("zerolap")

CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance verdict for the terminal summary."""
    CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

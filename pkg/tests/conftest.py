import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion and assert on it."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@functools.lru_cache(maxsize=None)
def full_model(name: str, dims=(4, 4, 12)):
    from crosskerr.models import build_full_squid_hamiltonian, preset

    model = build_full_squid_hamiltonian(preset(name), dims=dims)
    return model, model.dressed()


@functools.lru_cache(maxsize=None)
def calibration(name: str, xi: float):
    from crosskerr.floquet import calibrate_for_xi

    model, dressed = full_model(name)
    return calibrate_for_xi(model, xi, dressed)

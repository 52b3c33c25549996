import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marskit import SimConfig, simulate_session  # noqa: E402

ACCEPTANCE_RESULTS = []


@pytest.fixture
def small_session():
    session, truth = simulate_session(SimConfig(duration_s=2.0, seed=7))
    return session, truth


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)

import sys
from pathlib import Path

import pytest

# make the oracle helpers importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

from psc.simulation import DgpConfig, generate_dgp  # noqa: E402


@pytest.fixture(scope="session")
def small_data():
    return generate_dgp(DgpConfig(regime=1, n=300, rho=0.3, seed=11)).data


@pytest.fixture(scope="session")
def tiny_data():
    return generate_dgp(DgpConfig(regime=1, n=40, rho=0.0, seed=3)).data


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

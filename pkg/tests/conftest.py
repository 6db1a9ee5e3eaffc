import math

import pytest

from classe_wpt import design
from classe_wpt.circuit import PROTOTYPE

# Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def proto():
    return PROTOTYPE


@pytest.fixture(scope="session")
def exact_design():
    """Prototype admittance with the tank resonance placed exactly at 1.29 fs."""
    Lf, Cf = design.solve_lf_cf(math.sqrt(76e-9 / 5.3e-6), PROTOTYPE.fs)
    return PROTOTYPE.with_(Lf=Lf, Cf=Cf)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

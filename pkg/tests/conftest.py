import numpy as np
import pytest

from wheelgins.mech import ImuErrors, NavState
from wheelgins.state import FullState, InstallationParams


def to_full(x) -> FullState:
    """Package state equivalent to an oracle ``State``."""
    return FullState(
        NavState(0.0, x.pos, x.vel, x.R),
        ImuErrors(x.bg, x.ba, x.sg, x.sa),
        InstallationParams(x.lw, x.phim, x.r_meas, x.sr, x.lg),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)

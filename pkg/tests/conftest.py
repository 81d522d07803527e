import math

import pytest

from sinai_lab.env import explicit


def _omega(log_rho):
    return 1.0 / (1.0 + math.exp(log_rho))


def valley_w():
    """Hand-built staircase potential.

    Right: V(1) = -1, V(2) = -2, then +1.5 per site up to V(9) = 8.5.
    Left: V(-1) = 1, V(-2) = 0, V(-3) = -1, V(-4) = -3, then +1.5 per site
    outwards up to V(-11) = 7.5. Elsewhere omega = 1/2 (flat potential).
    """
    lr = {1: -1.0, 2: -1.0}
    lr.update({x: 1.5 for x in range(3, 10)})
    lr.update({0: -1.0, -1: 1.0, -2: 1.0, -3: 2.0})
    lr.update({x: -1.5 for x in range(-10, -3)})
    return explicit({x: _omega(v) for x, v in lr.items()})


@pytest.fixture
def env_w():
    return valley_w()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import pytest

from gasrelax.model import GasParams

ACCEPTANCE_LINES = []


@pytest.fixture
def hot():
    """Standard parameter set: c = 0.5, sigma0^2 = 4, sigmax^2 = 1, lambda = 2."""
    return GasParams(3.0, 1.0, 4.0, 1.0, 2.0)


@pytest.fixture
def symmetric():
    """c = 0 and sigma0 = sigmax."""
    return GasParams(1.0, 1.0, 1.0, 1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

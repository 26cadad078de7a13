import math

import pytest

from tfcka.channel_model import REFERENCE_MISALIGNMENT, SetupParams, loss_db_to_transmittance


def reference_setup(n_parties, loss_db, n_ports=None, q=0.9):
    """Dark counts 1e-9 and 2% polarization/phase misalignment."""
    a = REFERENCE_MISALIGNMENT
    return SetupParams(
        n_parties, n_ports or n_parties, q, loss_db_to_transmittance(loss_db), a, a, 1e-9
    )


@pytest.fixture
def ref_setup():
    return reference_setup


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


HALF_LN2 = 0.5 * math.log(2.0)

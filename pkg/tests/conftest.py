import numpy as np
import pytest

from pmufault.matrices import build_admittance, invert_to_impedance, make_placement, partition
from pmufault.networks import (IEEE34_BAD_PLACEMENT, IEEE34_GOOD_PLACEMENT, fork_network,
                               chain_network, ieee34)


class Feeder:
    """Model plus its Y/Z, built once per session."""

    def __init__(self, model):
        self.model = model
        self.adm = build_admittance(model)
        self.imp = invert_to_impedance(self.adm)
        self.imap = self.adm.index_map

    def blocks(self, buses):
        pl = make_placement(self.imap, list(buses))
        return pl, partition(self.adm, self.imp, pl)


@pytest.fixture(scope="session")
def feeder34():
    return Feeder(ieee34())


@pytest.fixture(scope="session")
def fork():
    return Feeder(fork_network())


@pytest.fixture(scope="session")
def chain():
    return Feeder(chain_network())


@pytest.fixture(scope="session")
def good_placement():
    return IEEE34_GOOD_PLACEMENT


@pytest.fixture(scope="session")
def bad_placement():
    return IEEE34_BAD_PLACEMENT


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")

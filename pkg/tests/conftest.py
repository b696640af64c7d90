import sys
import numpy as np
import pytest
from hypothesis import settings

from pmsim import Observable, QuantumState

settings.register_profile("pmsim", max_examples=40, deadline=None)
settings.load_profile("pmsim")


@pytest.fixture
def test_state():
    """The (3/5, 4/5) two-level state used throughout."""
    return QuantumState.from_amplitudes([0.6, 0.8])


@pytest.fixture
def sigma_z():
    return Observable(np.diag([1.0, -1.0]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])

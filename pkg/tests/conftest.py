import sys
import numpy as np
import pytest

from sindy_forge import kernels
from sindy_forge.timeseries import Trajectory

BACKENDS = ["numpy"] + (["numba"] if kernels.NUMBA_AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_traj(states, inputs=None, dt=0.1, t0=0.0, **kw):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if inputs is None:
        inputs = np.zeros((states.shape[0], 0))
    return Trajectory(t0, dt, states, inputs, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

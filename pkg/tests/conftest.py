import numpy as np
import pytest

from pnpfd.grid import Grid
from pnpfd.harness import compare_schemes
from pnpfd.params import channel_defaults

# (criterion, passed, detail) collected by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def channel_runs():
    """Baseline channel runs (J=1000, dt=1e-4, t in [0, 1]) under both boundary schemes."""
    return compare_schemes(channel_defaults(), J=1000, dt=1e-4, t_end=1.0,
                           snapshot_times=(0.0, 0.01, 0.05, 1.0), sample_every=10)


@pytest.fixture(scope="session")
def channel_grid():
    return Grid(1000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

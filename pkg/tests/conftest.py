import numpy as np
import pytest
from hypothesis import settings

from kvhsim.grid import make_grid

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64, 64, (-8.0, 8.0))


@pytest.fixture(scope="session")
def grid128():
    return make_grid(128, 128, (-16.0, 16.0))


def gaussian(grid, q0=0.0, p0=0.0, s=1.0):
    return np.exp(-((grid.Q - q0) ** 2 + (grid.P - p0) ** 2) / (2 * s * s))


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Collects one ``(criterion, passed, detail)`` record per acceptance criterion."""
    return pytestconfig.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    records = config.stash.get(ACCEPTANCE_KEY, [])
    if not records:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(records, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")

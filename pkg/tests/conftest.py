import pytest

from coupled_nls.constants import estimate_gn_constant, thresholds
from coupled_nls.grid import build_grid
from coupled_nls.model import KappaProfile, ModelParams

CUBIC = ModelParams(3, 1.0, 1.0, 1.0, 4.0, 4.0, 2.0, 2.0)
MP_R_MAX = 5.6


@pytest.fixture(scope="session")
def gn4():
    return estimate_gn_constant(3, 4.0, build_grid(3, 24.0, 2001))


@pytest.fixture(scope="session")
def mp_setup(gn4):
    """Cubic benchmark: kappa = 0.5 cap / (1 + r^1.5) on a grid sized to the K1 scale."""
    grid = build_grid(3, MP_R_MAX, 2001)
    cap = thresholds(CUBIC, KappaProfile.zero(), gn4).kappa_cap
    kappa = KappaProfile.rational(0.5 * cap)
    th = thresholds(CUBIC, kappa, gn4, grid)
    return CUBIC, kappa, grid, th


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])

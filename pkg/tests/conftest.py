import numpy as np
import pytest

from fglab.finite_gap_kdv import build_spectral_data
from fglab.hyperelliptic import HyperellipticCurve
from fglab.special_functions import Lattice

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def genus1():
    """Curve from the rectangular lattice with roots (1, 0.2, -1.2)."""
    lat = Lattice.from_roots(1.0, 0.2, -1.2)
    e = sorted(-r.real for r in lat.roots)
    curve = HyperellipticCurve(tuple(e))
    data = build_spectral_data(curve, [(0.5 * (e[1] + e[2]), 1)])
    return lat, curve, data


@pytest.fixture(scope="session")
def genus1_moving():
    """Genus-1 data with nonzero branch-point sum, so the t-flow is non-trivial."""
    curve = HyperellipticCurve((-1.0, 0.3, 2.2))
    return build_spectral_data(curve, [(1.0, 1)])


@pytest.fixture(scope="session")
def genus2():
    curve = HyperellipticCurve((0.0, 1.0, 2.0, 3.0, 4.0))
    return curve, build_spectral_data(curve, [(1.3, 1), (3.6, -1)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split()[0])):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from gpisgrasp.geometry import box, cylinder, icosphere, sample_surface
from gpisgrasp.gpis import fit_gpis
from gpisgrasp.planner import build_scene


@pytest.fixture(scope="session")
def unit_sphere_gpis():
    mesh = icosphere(1.0, 3)
    return fit_gpis(sample_surface(mesh, 200, seed=0), offset=0.1)


@pytest.fixture(scope="session")
def sphere_scene():
    return build_scene(icosphere(0.05, 3))


@pytest.fixture(scope="session")
def box_scene():
    return build_scene(box((0.06, 0.06, 0.12)))


@pytest.fixture(scope="session")
def cylinder_scene():
    return build_scene(cylinder(0.04, 0.12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report their verdicts here; printed after the run
_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

import numpy as np
import pytest

from panohv.panogeom import ImageGrid
from panohv.synth import cuboid_room, render_depth


@pytest.fixture(scope="session")
def small_grid():
    return ImageGrid(128, 256)


@pytest.fixture(scope="session")
def cuboid(small_grid):
    """Empty 4 x 6 x 3 m room with the camera off-centre, rendered at 128 x 256."""
    spec = cuboid_room(-1.7, 2.3, -2.6, 3.4, -1.6, 1.4)
    depth, gt = render_depth(spec, small_grid)
    return spec, depth, gt


@pytest.fixture(scope="session")
def cuboid_512():
    spec = cuboid_room(-1.7, 2.3, -2.6, 3.4, -1.6, 1.4)
    depth, gt = render_depth(spec, ImageGrid(512, 1024))
    return spec, depth, gt


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE][number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])

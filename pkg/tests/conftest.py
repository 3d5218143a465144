import numpy as np
import pytest

from sntransport.dg import SpatialMesh, assemble_operators, build_dg_space
from sntransport.fields import variable_scattering
from sntransport.quadrature import build_cl_quadrature


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="run published-resolution benchmark reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip = pytest.mark.skip(reason="needs --full")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


def make_ops(n=4, K=1, sigma_s=1.0, sigma_a=0.0, source=1.0, boundary=0.0, box=(-1, 1)):
    mesh = SpatialMesh(box[0], box[1], box[0], box[1], n, n)
    space = build_dg_space(mesh, K)
    return assemble_operators(space, sigma_s, sigma_a, source, boundary)


@pytest.fixture
def small_ops():
    """4 x 4 cells, K=1, smoothly varying scattering plus weak absorption."""
    return make_ops(4, sigma_s=lambda x, y: 0.5 + variable_scattering(x, y) / 50,
                    sigma_a=0.2, source=lambda x, y: np.exp(-(x**2 + y**2)))


@pytest.fixture
def cl42():
    return build_cl_quadrature(4, 2)


@pytest.fixture
def cl84():
    return build_cl_quadrature(8, 4)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one pass/fail line and asserts ``ok``."""
    lines = request.config._acceptance_lines

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

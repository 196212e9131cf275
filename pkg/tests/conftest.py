import numpy as np
import pytest

from tentpitcher.cones.field import Disc, Region, WavespeedField
from tentpitcher.mesh_core import SpaceMesh


def grid_mesh(n: int) -> SpaceMesh:
    """Unit square split into n x n squares, each cut along its rising diagonal."""
    xs = np.linspace(0.0, 1.0, n + 1)
    pts = np.array([[x, y] for y in xs for x in xs])
    cells = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            cells += [[a, a + 1, a + n + 2], [a, a + n + 2, a + n + 1]]
    return SpaceMesh(2, pts, cells)


def line_mesh(xs) -> SpaceMesh:
    xs = np.asarray(xs, dtype=float)
    return SpaceMesh(1, xs[:, None], [[i, i + 1] for i in range(len(xs) - 1)])


def delaunay_mesh(rng, n_points: int) -> SpaceMesh:
    from scipy.spatial import Delaunay

    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    pts = np.vstack([corners, rng.uniform(0.1, 0.9, (n_points, 2))])
    return SpaceMesh(2, pts, Delaunay(pts).simplices)


def two_speed_field() -> WavespeedField:
    """Slope 1 everywhere except a disc of slope 1/2 (twice the wavespeed)."""
    return WavespeedField(1.0, [Region(Disc((0.5, 0.5), 0.3), -np.inf, np.inf, 0.5)])


@pytest.fixture
def square():
    return grid_mesh(1)


@pytest.fixture
def constant():
    return WavespeedField.constant(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)

import math

import numpy as np
import pytest

from tentpitcher.cones.field import HalfSpace, Region, WavespeedField
from tentpitcher.errors import DegenerateSimplex, InvalidArgument
from tentpitcher.front import (
    Front,
    Triangulation,
    advance_vertex,
    gradient_mag,
    is_causal,
    local_minima,
    simplex_gradient,
    time_spread_ok,
)

from .conftest import delaunay_mesh, grid_mesh, line_mesh


def test_segment_gradient():
    front = Front(Triangulation(np.array([[0.0], [2.0]]), [[0, 1]]), [0.0, 1.0])
    assert gradient_mag(front, [0, 1]) == 0.5


def test_flat_triangle_gradient():
    front = Front(Triangulation(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]]), [3.0, 3, 3])
    assert gradient_mag(front, [0, 1, 2]) == 0.0


def test_lifted_corner_gradient():
    front = Front(Triangulation(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]]), [1.0, 0, 0])
    assert gradient_mag(front, [0, 1, 2]) == pytest.approx(math.sqrt(2))


def test_degenerate_gradient():
    with pytest.raises(DegenerateSimplex):
        simplex_gradient(np.array([[0, 0], [1, 1], [2, 2.0]]), [0, 1, 2])


def test_local_minima_constant(square):
    assert local_minima(Front.flat(square)) == [0, 1, 2, 3]


def test_local_minima_increasing_chain():
    mesh = line_mesh([0, 1, 2, 3])
    front = Front(Triangulation.from_mesh(mesh), [0.0, 0.1, 0.2, 0.3])
    assert local_minima(front) == [0]


def test_local_minima_brute_force(rng):
    mesh = delaunay_mesh(rng, 46)
    front = Front(Triangulation.from_mesh(mesh), rng.uniform(0, 1, mesh.n_vertices))
    expected = []
    for p in range(mesh.n_vertices):
        nbrs = {int(q) for cell in mesh.cells if p in cell for q in cell if q != p}
        if all(front.times[p] <= front.times[q] for q in nbrs):
            expected.append(p)
    assert local_minima(front) == expected
    assert expected


def test_advance_zero_is_identity(square):
    front = Front.flat(square)
    assert np.array_equal(advance_vertex(front, 1, 0.0).times, front.times)


def test_advance_changes_one_vertex(square):
    front = Front.flat(square)
    new = advance_vertex(front, 2, 1.0)
    assert new.times.tolist() == [0, 0, 1, 0]
    assert front.times.tolist() == [0, 0, 0, 0]
    assert new.tri is front.tri


def test_advance_negative():
    front = Front.flat(grid_mesh(1))
    with pytest.raises(InvalidArgument):
        advance_vertex(front, 0, -1.0)


def test_advances_commute():
    front = Front.flat(grid_mesh(2))
    a = advance_vertex(advance_vertex(front, 0, 0.3), 8, 0.2)
    b = advance_vertex(advance_vertex(front, 8, 0.2), 0, 0.3)
    assert np.array_equal(a.times, b.times)


def test_causal_constant_front(square):
    assert is_causal(Front.flat(square, 2.0), WavespeedField.constant(0.1))


def test_steep_segment_not_causal():
    front = Front(Triangulation(np.array([[0.0], [1.0]]), [[0, 1]]), [0.0, 1.5])
    assert not is_causal(front, WavespeedField.constant(1.0))


def sampled_slope(normal, offset, t0, value, coords, times, rng, n=20000):
    """Smallest slope over corners, edge points and random points of the lifted facet.

    Written directly for one half-plane region switched on at ``t0``.
    """
    lifted = np.hstack([coords, times[:, None]])
    w = rng.dirichlet(np.ones(len(times)), size=n)
    s = np.linspace(0, 1, 2001)[:, None]
    edges = [lifted[i] + s * (lifted[j] - lifted[i]) for i in range(3) for j in range(i + 1, 3)]
    pts = np.vstack([lifted, w @ lifted, *edges])
    inside = (pts[:, :2] @ np.asarray(normal) <= offset) & (pts[:, 2] >= t0)
    return value if inside.any() else 1.0


def test_is_causal_matches_sampling(rng):
    for _ in range(100):
        normal = tuple(rng.normal(size=2))
        offset, t0, value = rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2), rng.uniform(0.3, 0.9)
        field = WavespeedField(1.0, [Region(HalfSpace(normal, offset), t0, math.inf, value)])
        mesh = delaunay_mesh(rng, 3)
        front = Front(Triangulation.from_mesh(mesh), rng.uniform(0, 0.25, mesh.n_vertices))
        oracle = True
        for cell in mesh.cells:
            g = gradient_mag(front, cell)
            sampled = sampled_slope(normal, offset, t0, value, mesh.points[cell],
                                    front.times[cell], rng)
            oracle &= g < sampled
        assert is_causal(front, field) == oracle


def test_causal_fronts_have_bounded_spread(rng):
    field = WavespeedField.constant(1.0)
    mesh = grid_mesh(3)
    tri = Triangulation.from_mesh(mesh)
    front = Front(tri, np.zeros(mesh.n_vertices))
    for _ in range(200):
        p = int(rng.integers(mesh.n_vertices))
        cand = advance_vertex(front, p, float(rng.uniform(0, 0.3)))
        if is_causal(cand, field):
            front = cand
            assert time_spread_ok(front, mesh.diameter, field.max_slope)

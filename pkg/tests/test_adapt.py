import math

import numpy as np
import pytest

from tentpitcher.adapt import RefForest, degree_bound, per_triangle_counts, subtree_leaves
from tentpitcher.errors import ClassUndefined, CoarsenRejected, FlipRejected, NotALeaf
from tentpitcher.mesh_core import simplex_measure

# Unit square with diagonal 0-3.  Triangle 0 has apex 0 (base 1-3), triangle 1
# has apex 2 (base 0-3) and triangle 2 hangs below edge 0-1 with apex 4.
PTS = [[0, 0], [1, 0], [0, 1], [1, 1], [0.5, -0.5]]
CELLS = [[0, 1, 3], [2, 0, 3], [4, 0, 1]]
APEX = [0, 2, 4]


def cascade_forest(with_bottom=False):
    n = 3 if with_bottom else 2
    return RefForest(PTS, CELLS[:n], APEX[:n])


def ops(forest, start):
    return [entry[0] for entry in forest.log[start:]]


def leaf_set(forest):
    return {(tuple(forest.points[n.apex]), frozenset(tuple(forest.points[v]) for v in n.verts))
            for n in forest.leaves}


def hexagon_ring():
    k = 6
    pts = [[0.0, 0.0]] + [[math.cos(2 * math.pi * i / k), math.sin(2 * math.pi * i / k)]
                          for i in range(k)]
    cells = [[0, 1 + i, 1 + (i + 1) % k] for i in range(k)]
    return RefForest(pts, cells, [1 + i for i in range(k)])


# ---------------------------------------------------------------- bisection


def test_bisect_midpoint_and_areas():
    f = RefForest([[0, 0], [2, 0], [1, 1]], [[0, 1, 2]], [2])
    root = f.roots[0]
    kids, m = f.bisect_triangle(root)
    assert np.allclose(f.points[m], [1, 0])
    area = simplex_measure(np.array([f.points[v] for v in root.verts]))
    for kid in kids:
        assert kid.apex == m and kid.level == 1
        assert simplex_measure(np.array([f.points[v] for v in kid.verts])) == pytest.approx(area / 2)


def test_bisect_boundary_base_marks_nothing():
    f = cascade_forest()
    f.bisect_triangle(f.roots[0])
    assert f.dirty_nodes() == []


def test_bisect_non_leaf():
    f = RefForest([[0, 0], [2, 0], [1, 1]], [[0, 1, 2]], [2])
    root = f.roots[0]
    f.bisect_triangle(root)
    with pytest.raises(NotALeaf):
        f.bisect_triangle(root)


def test_new_vertex_degree():
    f = RefForest([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], [1, 3])
    recs = f.refine_earnest(f.roots[0])
    assert f.degree(recs[0].midpoint) == 4
    g = RefForest([[0, 0], [2, 0], [1, 1]], [[0, 1, 2]], [2])
    _, m = g.bisect_triangle(g.roots[0])
    assert g.degree(m) == 3


# --------------------------------------------------------------- propagation


def test_earnest_isolated_single_bisection():
    f = RefForest([[0, 0], [2, 0], [1, 1]], [[0, 1, 2]], [2])
    assert len(f.refine_earnest(f.roots[0])) == 1


def test_earnest_cascade_matches_hand_result():
    f = cascade_forest()
    f.refine_earnest(f.roots[1])
    m1, m2 = (1.0, 0.5), (0.5, 0.5)
    o, a, b, c = (0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)
    expected = {
        (m1, frozenset({m1, a, o})),
        (m2, frozenset({m2, m1, o})),
        (m2, frozenset({m2, m1, c})),
        (m2, frozenset({m2, o, b})),
        (m2, frozenset({m2, b, c})),
    }
    assert leaf_set(f) == expected


def test_earnest_ring_terminates():
    f = hexagon_ring()
    start = {n.id for n in f.leaves}
    recs = f.refine_earnest(f.roots[0])
    counts = per_triangle_counts(f, recs, start)
    assert counts and max(counts.values()) <= 2
    assert not f.dirty_nodes()
    # The propagation returns to the first triangle: all six are split.
    assert all(not r.is_leaf for r in f.roots)


def test_lazy_cascade_equals_earnest():
    earnest = cascade_forest()
    earnest.refine_earnest(earnest.roots[1])
    lazy = cascade_forest()
    lazy.refine_lazy(lazy.roots[1])
    assert lazy.dirty_nodes()
    lazy.cleanup_all()
    assert lazy.signature() == earnest.signature()


def test_cleanup1_is_one_bisection_and_one_flip():
    f = cascade_forest()
    f.refine_lazy(f.roots[1])
    start = len(f.log)
    f.cleanup_all()
    assert sorted(ops(f, start)) == ["bisect", "flip"]


def test_cleanup2_with_subdivided_child():
    f = cascade_forest(with_bottom=True)
    f.refine_lazy(f.roots[1])
    dirty = f.roots[0]
    near = next(k for k in dirty.children if dirty.apex in k.verts)
    start = len(f.log)
    f.refine_lazy(f.roots[2])
    assert f.log[start][0] == "bisect"  # splits the near child together with the new triangle
    assert ops(f, start + 1) == ["bisect", "flip", "flip"]
    assert not near.alive or not near.is_leaf
    assert not f.dirty_nodes()


def test_cleanup_before_pitching():
    f = cascade_forest()
    assert f.cleanup_before_pitching(0) == 0
    f.refine_lazy(f.roots[1])
    assert f.cleanup_before_pitching(1) == 1
    assert not any(n.transient for n in f.incident_leaves(1))


def test_degree_bound_formula():
    assert degree_bound(2) == 8
    assert degree_bound(6) == 11


# ---------------------------------------------------------------- edge flips


def square_forest(times=None):
    return RefForest([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]], [1, 3], times)


def test_flat_flip_has_no_patch_and_is_an_involution():
    f = square_forest()
    before = f.signature()
    new, patch = f.flip_edge(0, 2)
    assert new == (1, 3) and patch is None
    f.flip_edge(1, 3)
    assert f.signature() == before


def test_flip_backward_in_time_rejected():
    f = square_forest([0.3, 0.0, 0.0, 0.0])
    with pytest.raises(FlipRejected):
        f.flip_edge(0, 2)


def test_lifted_flip_makes_one_tetrahedron():
    f = square_forest([0.0, 0.3, 0.0, 0.0])
    _, patch = f.flip_edge(0, 2)
    assert len(patch.elements) == 1
    labels = patch.elements[0].labels
    assert labels.count("inflow") == 2 and labels.count("outflow") == 2


def test_flip_rejects_non_convex():
    f = RefForest([[0, 0], [1, 0], [0.2, 0.2], [0, 1]], [[0, 1, 2], [0, 2, 3]], [2, 2])
    with pytest.raises(FlipRejected):
        f.flip_edge(0, 2)


# ---------------------------------------------------------------- coarsening


def test_derefine_restores_forest():
    f = square_forest()
    before = f.signature()
    recs = f.refine_earnest(f.roots[0])
    m = recs[0].midpoint
    merged = f.derefine(f.incident_leaves(m)[0])
    assert len(merged) == 2
    assert f.signature() == before
    assert not f.alive[m]


def test_derefine_rejects_non_coplanar():
    f = square_forest()
    recs = f.refine_earnest(f.roots[0])
    m = recs[0].midpoint
    f.times[m] = 0.25
    with pytest.raises(CoarsenRejected) as info:
        f.derefine(f.incident_leaves(m)[0])
    assert info.value.reason == "Coplanarity"


def test_derefine_root():
    f = square_forest()
    with pytest.raises(CoarsenRejected) as info:
        f.derefine(f.roots[0])
    assert info.value.reason == "Root"


def test_loop_coarsening_needs_one_flip():
    f = hexagon_ring()
    before = f.signature()
    f.refine_earnest(f.roots[0])
    for node in f.nodes:
        node.coarsenable = True
    for leaf in list(f.leaves):
        with pytest.raises(CoarsenRejected):
            f.derefine(leaf)
    last = f.roots[-1]
    p, m = last.apex, last.children[0].apex
    f.flip_edge(p, m)
    assert f.degree(m) == 4
    f.derefine(f.incident_leaves(m)[0])
    assert f.signature() == before


# ------------------------------------------------------------------ classes


def test_root_is_class_zero():
    f = square_forest()
    assert f.homothety_class(f.roots[0]) == 0


def test_flipped_has_no_class():
    f = square_forest()
    f.flip_edge(0, 2)
    with pytest.raises(ClassUndefined):
        f.homothety_class(f.leaves[0])


def refine_uniformly(f, levels):
    for _ in range(levels):
        for leaf in list(f.leaves):
            if leaf.alive and leaf.is_leaf:
                f.bisect_triangle(leaf)


def test_two_levels_down_is_similar():
    """The grandchildren at the two base corners are half-size copies."""
    f = RefForest([[0, 0], [3, 0], [1.1, 1.7]], [[0, 1, 2]], [2])
    refine_uniformly(f, 4)
    checked = 0
    for node in f.nodes:
        if node.level != 2:
            continue
        for corner in node.verts[1:]:
            grand = [g for kid in node.children for g in kid.children if corner in g.verts]
            assert len(grand) == 1
            assert f.homothety_class(grand[0]) == f.homothety_class(node)
            assert f.diameter(grand[0]) == pytest.approx(f.diameter(node) / 2)
            checked += 1
    assert checked == 8


def test_subtree_leaves_tile_root():
    f = RefForest([[0, 0], [3, 0], [1.1, 1.7]], [[0, 1, 2]], [2])
    refine_uniformly(f, 3)
    leaves = subtree_leaves(f.roots[0])
    area = sum(simplex_measure(np.array([f.points[v] for v in n.verts])) for n in leaves)
    assert len(leaves) == 8
    assert area == pytest.approx(simplex_measure(np.array(f.points[:3])))

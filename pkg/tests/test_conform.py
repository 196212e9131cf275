import numpy as np
import pytest

from tentpitcher.adapt import RefForest
from tentpitcher.cones.field import WavespeedField
from tentpitcher.conform import (
    CASE_BELOW,
    CASE_FREE,
    CASE_TARGET,
    CoarsenCluster,
    ConformingPitcher,
    TargetState,
    assign_target_times,
    choose_height,
    choose_height_heuristic,
    coarsen_scheduler,
    invariant_holds,
    run_conforming,
    smooth_height,
)
from tentpitcher.errors import CoarsenRejected, CycleUnsupported, InvalidArgument, InvariantViolation
from tentpitcher.front import Front
from tentpitcher.pitcher import PitchPolicy, verify_weak_complex

from .conftest import grid_mesh, line_mesh

CONFORM = PitchPolicy(mode="conform", target=1.0)


def refined_square(levels, rounds=None):
    """Uniformly refined square; ``rounds`` receives each new vertex's round."""
    forest = RefForest.from_mesh(grid_mesh(1))
    for k in range(levels):
        before = len(forest.points)
        for leaf in list(forest.leaves):
            if leaf.alive and leaf.is_leaf:
                forest.refine_earnest(leaf)
        if rounds is not None:
            rounds.update({v: k for v in range(before, len(forest.points))})
    return forest


# ----------------------------------------------------------------- heights


def test_choose_height_case_target():
    assert choose_height(0.0, 10.2, 10.0, 0.5, 1.0, with_case=True) == (10.0, CASE_TARGET)


def test_choose_height_case_below():
    assert choose_height(0.0, 9.8, 10.0, 0.5, 1.0, with_case=True) == (9.5, CASE_BELOW)


def test_choose_height_case_free():
    assert choose_height(0.0, 5.0, 10.0, 0.5, 1.0, with_case=True) == (5.0, CASE_FREE)


def test_choose_height_invariant_violated():
    with pytest.raises(InvariantViolation):
        choose_height(9.8, 10.0, 10.0, 0.5, 1.0)


def test_choose_height_guarantee(rng):
    for _ in range(500):
        gamma = float(rng.uniform(0.05, 0.5))
        h_p = float(rng.uniform(0.1, 2))
        target = 10.0
        tau = float(rng.uniform(0, target - gamma * h_p))
        sup = tau + h_p + float(rng.uniform(0, 5))
        top = choose_height(tau, sup, target, gamma, h_p)
        assert top - tau >= gamma * h_p - 1e-12
        assert top <= sup
        assert invariant_holds(top, target, gamma, h_p)


def test_heuristic_midpoint():
    assert choose_height_heuristic(0.0, 0.9, 1.0) == pytest.approx(0.5)


def test_heuristic_passthrough_and_target():
    assert choose_height_heuristic(0.0, 0.3, 1.0) == 0.3
    assert choose_height_heuristic(0.0, 1.4, 1.0) == 1.0


def test_heuristic_rejects_low_sup():
    with pytest.raises(InvalidArgument):
        choose_height_heuristic(1.0, 0.5, 2.0)


def test_smooth_height():
    assert smooth_height(3.0, 1.0, 0.5) == 2.0
    assert smooth_height(1.2, 1.0, 0.5) == 1.2


def test_smooth_height_keeps_guarantee(rng):
    for _ in range(200):
        h_p = float(rng.uniform(0.1, 1))
        h = h_p + float(rng.uniform(0, 3))
        assert smooth_height(h, h_p, 0.5) >= h_p


def test_smoothing_skipped_when_target_curtails():
    # Case 2 lands on T - (1-γ)h_p; a tall sup must not be averaged away.
    driver = ConformingPitcher(line_mesh([0, 1, 2]), PitchPolicy(mode="conform", target=1.0),
                               WavespeedField.constant(1.0))
    front = driver.front()
    h_p = driver.h_of(1)
    top, note = driver.choose_top(front, 1, 1.0 - 0.2 * h_p, 0.0)
    assert note == "|Target2"
    assert top == pytest.approx(1.0 - 0.5 * h_p)


# ----------------------------------------------------------------- targets


def test_no_clusters_use_global_target():
    forest = RefForest.from_mesh(grid_mesh(2))
    state = assign_target_times(forest.front(), forest, 0.5, 3.0, h=lambda v: 1.0)
    assert not state.clusters
    assert all(state.target(v) == 3.0 for v in range(len(forest.points)))


def test_single_cluster_flat_front():
    forest = refined_square(2)
    for node in forest.nodes:
        node.coarsenable = True
    state = assign_target_times(forest.front(), forest, 0.5, 3.0, h=lambda v: 1.0)
    assert state.clusters
    for cluster in state.clusters.values():
        assert cluster.target == 0.5
        assert len(cluster.verts) in (4, 5)
        assert all(state.target(v) == 0.5 for v in cluster.verts)


def test_vertex_in_two_clusters_takes_smaller():
    state = TargetState(5.0)
    state.clusters = {10: CoarsenCluster(10, (10, 1, 2, 3, 4), 2.0),
                      11: CoarsenCluster(11, (11, 3, 4, 5, 6), 1.0)}
    from tentpitcher.conform import _apply_cluster_targets

    _apply_cluster_targets(state)
    assert state.target(3) == 1.0
    assert state.target(1) == 2.0
    assert state.target(99) == 5.0


def test_cycle_detected():
    front = Front(RefForest.from_mesh(grid_mesh(1)).front().tri, np.zeros(4))
    state = TargetState(5.0)
    state.clusters = {0: CoarsenCluster(0, (0, 1, 3), 0.0), 2: CoarsenCluster(2, (2, 3), 0.0)}
    with pytest.raises(CycleUnsupported):
        coarsen_scheduler(front, state, _RefusingForest())


def test_refused_disjoint_clusters_are_not_a_cycle():
    front = Front(RefForest.from_mesh(grid_mesh(1)).front().tri, np.zeros(4))
    state = TargetState(5.0)
    state.clusters = {0: CoarsenCluster(0, (0, 1), 0.0), 2: CoarsenCluster(2, (2, 3), 0.0)}
    assert coarsen_scheduler(front, state, _RefusingForest()) == []


class _RefusingForest:
    """Every vertex alive; every merge refused."""

    alive = {v: True for v in range(4)}

    def incident_leaves(self, s):
        return [None]

    def derefine(self, leaf):
        raise CoarsenRejected("Pattern", "held by a neighbouring cluster")


# --------------------------------------------------------------------- runs


def test_run_conforming_1d():
    mesh = run_conforming(line_mesh([0, 1, 3]), CONFORM, WavespeedField.constant(1.0), target=2.0)
    driver = mesh.driver
    assert np.all(driver.front().times == 2.0)
    assert driver.min_ratio >= 1.0
    assert verify_weak_complex(mesh).ok


def test_run_conforming_square():
    mesh = run_conforming(grid_mesh(1), CONFORM, WavespeedField.constant(1.0))
    driver = mesh.driver
    front = driver.front()
    assert np.all(front.times[front.tri.vertices] == 1.0)
    assert driver.min_ratio >= 1.0 - 1e-12
    for e in driver.events:
        if e["op"] == "pitch":
            assert e["t_new"] - e["t_old"] >= e["floor"] * (1 - 1e-12)
    assert verify_weak_complex(mesh).ok


def test_outflow_covers_target_plane():
    mesh = run_conforming(grid_mesh(2), CONFORM, WavespeedField.constant(1.0))
    area = 0.0
    for el in mesh.elements:
        top = el.facet(el.labels.index("outflow"))
        if np.all(top[:, -1] == 1.0):
            a, b, c = top[:, :2]
            area += abs(np.cross(np.append(b - a, 0), np.append(c - a, 0))[2]) / 2
    assert area == pytest.approx(1.0)


def test_two_phase_union():
    field = WavespeedField.constant(1.0)
    first = run_conforming(grid_mesh(2), CONFORM, field)
    forest = RefForest.from_mesh(grid_mesh(2), np.full(9, 1.0))
    second = ConformingPitcher(grid_mesh(2), PitchPolicy(mode="conform", target=2.0), field,
                               forest=forest)
    mesh, _ = second.run()
    assert np.all(second.front().times[second.front().tri.vertices] == 2.0)
    both = [el.coords for el in first.elements] + [el.coords for el in mesh.elements]
    assert verify_weak_complex(both).ok


def test_scripted_coarsening_merges_clusters():
    rounds = {}
    forest = refined_square(3, rounds)
    assert len(forest.leaves) == 16
    for node in forest.nodes:
        node.coarsenable = True
    merges = []
    plain = forest.derefine

    def recording(node, accept=None):
        merged = plain(node, accept)
        merges.append([parent.level for parent in merged])
        return merged

    forest.derefine = recording
    driver = ConformingPitcher(grid_mesh(1), CONFORM, WavespeedField.constant(1.0), forest=forest)
    mesh, _ = driver.run()
    centres = [e["vertex"] for e in driver.events if e["op"] == "coarsen"]
    assert len(forest.leaves) == 2
    assert all(rounds[s] == 2 for s in centres)
    # A merge may cascade into the enclosing clusters, but always from the
    # innermost level outward.
    for levels in merges:
        assert levels == sorted(levels, reverse=True)
    assert {lv for levels in merges for lv in levels} == {0, 1, 2}
    assert driver.steps <= 1000
    assert verify_weak_complex(mesh).ok


def test_refinement_resets_coarsenable_and_target():
    forest = refined_square(2)
    for node in forest.nodes:
        node.coarsenable = True
    driver = ConformingPitcher(grid_mesh(1), CONFORM, WavespeedField.constant(1.0), forest=forest)
    leaf = max(forest.leaves, key=forest.diameter)
    before = len(forest.points)
    driver._refine_leaf(leaf, "Reject")
    new_vertices = range(before, len(forest.points))
    assert new_vertices
    for v in new_vertices:
        assert driver.state.target(v) == 1.0
        assert not any(n.coarsenable for n in forest.incident_leaves(v))

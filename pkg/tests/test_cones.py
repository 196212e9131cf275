import math

import numpy as np
import pytest

from tentpitcher.cones.field import Disc, HalfSpace, Rect, Region, WavespeedField
from tentpitcher.cones.hierarchy import (
    ConeHierarchy,
    cone_meets_simplex,
    min_slope_intersecting,
    min_slope_scan,
    update_hierarchy,
)
from tentpitcher.cones.lookahead import (
    COARSENABLE,
    KEEP,
    REFINE,
    estimate_progress,
    is_h_progressive,
    is_hl_progressive,
    bisection_children,
    mach_refine_decision,
    maximize_progress,
)
from tentpitcher.cones.remote import (
    RemoteCone,
    facet_entry,
    t_remote_binary_search,
    t_remote_exact_1d,
    t_remote_scan,
    walk_remote,
)
from tentpitcher.constraints import ConstraintParams, causal_sup_2d, progress_sup_2d
from tentpitcher.errors import EstimateNotConverged, InvalidArgument
from tentpitcher.front import Front, Triangulation

from .conftest import line_mesh, two_speed_field

PARAMS = ConstraintParams(0.5)


def random_cone(rng, dim=2):
    k = int(rng.integers(1, dim + 2))
    base = rng.uniform(0, 4, dim)
    coords = base + rng.uniform(-0.5, 0.5, (k, dim))
    return RemoteCone(coords, rng.uniform(0, 0.5, k), float(rng.uniform(0.2, 1.5)))


def random_simplex(rng):
    base = np.append(rng.uniform(0, 4, 2), rng.uniform(0, 1.5))
    return base + rng.uniform(-0.6, 0.6, (3, 3))


# -------------------------------------------------------------------- field


def test_field_default_outside_regions():
    field = WavespeedField(1.0, [Region(Disc((5.0, 5.0), 1.0), 0.0, math.inf, 0.3)])
    assert field.value_at([0, 0, 1.0]) == 1.0
    assert field.value_at([5, 5, 1.0]) == 0.3
    assert field.value_at([5, 5, -1.0]) == 1.0


def test_two_speed_field_values():
    field = two_speed_field()
    assert field.value_at([0.5, 0.5, 0.0]) == 0.5
    assert field.value_at([0.05, 0.05, 0.0]) == 1.0
    assert (field.min_slope, field.max_slope) == (0.5, 1.0)


def test_later_regions_override():
    field = WavespeedField(1.0, [Region(Rect((0, 0), (2, 2)), -math.inf, math.inf, 0.5),
                                 Region(Rect((0, 0), (1, 1)), -math.inf, math.inf, 0.8)])
    assert field.value_at([0.5, 0.5, 0]) == 0.8
    assert field.value_at([1.5, 1.5, 0]) == 0.5


def test_field_monotone_in_time():
    field = WavespeedField(1.0, [Region(Disc((0.0, 0.0), 1.0), 0.5, math.inf, 0.4),
                                 Region(HalfSpace((1.0, 0.0), -0.5), 1.0, math.inf, 0.2)])
    assert field.monotonicity_violations(samples=10_000) == 0


def test_field_rejects_bad_values():
    with pytest.raises(InvalidArgument):
        WavespeedField(0.0)
    with pytest.raises(InvalidArgument):
        WavespeedField(1.0, [Region(Disc((0, 0), 1), 1.0, 0.5, 0.5)])


def test_field_dict_round_trip():
    field = two_speed_field()
    again = WavespeedField.from_dict(field.to_dict())
    assert again.to_dict() == field.to_dict()


def test_facet_min_is_conservative(rng):
    field = WavespeedField(1.0, [Region(Disc((0.5, 0.5), 0.3), 0.2, math.inf, 0.5)])
    for _ in range(50):
        coords = rng.uniform(0, 1, (3, 2))
        times = rng.uniform(0, 0.4, 3)
        w = rng.dirichlet(np.ones(3), size=400)
        lifted = w @ np.hstack([coords, times[:, None]])
        sampled = min(field.value_at(p) for p in lifted)
        assert field.facet_min(coords, times) <= sampled
        assert field.future_min(coords, times) <= field.facet_min(coords, times)


def test_future_values_skip_covered_default():
    # The region covers the triangle for all time, so the default never applies.
    field = WavespeedField(1.0, [Region(HalfSpace((-1.0, 0.0), -0.2), -math.inf, math.inf, 0.3)])
    coords = np.array([[0.5, 0.0], [0.9, 0.0], [0.5, 0.4]])
    assert field.future_max(coords, np.zeros(3)) == 0.3
    assert field.future_min(coords, np.zeros(3)) == 0.3


def test_facet_values_memo_matches_fresh_field(rng):
    field = two_speed_field()
    for _ in range(20):
        coords = rng.uniform(0, 1, (3, 2))
        times = rng.uniform(0, 0.3, 3)
        first = field.future_min(coords, times)
        assert field.future_min(coords, times) == first == two_speed_field().future_min(coords, times)


# ------------------------------------------------------------------- remote


def brute_entry(coords, times, slope, y, n=200):
    """Grid search of min over the facet of τ(x) + S|y - x|."""
    coords = np.asarray(coords, dtype=float)
    k = len(coords)
    if k == 1:
        return float(times[0] + slope * np.linalg.norm(y - coords[0]))
    s = np.linspace(0, 1, n + 1)
    if k == 2:
        w = np.stack([1 - s, s], axis=1)
    else:
        a, b = np.meshgrid(s, s)
        keep = (a + b) <= 1
        w = np.stack([1 - a[keep] - b[keep], a[keep], b[keep]], axis=1)
    pts = w @ coords
    return float((w @ times + slope * np.linalg.norm(pts - y, axis=1)).min())


def test_facet_entry_matches_grid(rng):
    for _ in range(100):
        cone = random_cone(rng)
        y = rng.uniform(0, 4, 2)
        exact = facet_entry(cone.coords, cone.times, cone.slope, y)
        oracle = brute_entry(cone.coords, cone.times, cone.slope, y)
        assert exact <= oracle + 1e-12
        assert exact == pytest.approx(oracle, abs=1e-3)


def single_cone_front():
    front = Front(Triangulation.from_mesh(line_mesh([0.0, 1.0])), [0.0, 0.0])
    return front, [RemoteCone(np.array([[10.0]]), [0.0], 0.1)]


def test_t_remote_single_cone():
    front, cones = single_cone_front()
    assert t_remote_exact_1d(front, 0, cones, local_slope=1.0) == pytest.approx(1.0)


def test_t_remote_non_binding_cone():
    front, cones = single_cone_front()
    assert t_remote_exact_1d(front, 0, cones, local_slope=0.1) == math.inf


def test_binary_search_single_cone():
    front, cones = single_cone_front()
    lo, hi, tol = 0.0, 4.0, 1e-6
    got = t_remote_binary_search(front, 0, lo, hi, tol, cones=cones, local_slope=1.0)
    assert abs(got - 1.0) <= tol
    assert got >= 1.0
    assert got.iterations <= math.ceil(math.log2((hi - lo) / tol))


def test_binary_search_no_cone_returns_hi():
    front, cones = single_cone_front()
    assert t_remote_binary_search(front, 0, 0.0, 0.5, 1e-6, cones=cones, local_slope=1.0) == 0.5


def test_binary_search_bad_bracket():
    front, cones = single_cone_front()
    with pytest.raises(InvalidArgument):
        t_remote_binary_search(front, 0, 1.0, 1.0, 1e-6, cones=cones)


def test_walk_remote_stops_at_binding_cone():
    # Local sup is 2 under slope 1 and 0.5 under slope 0.25; a cone of slope
    # 0.25 is entered at time 1, so the answer is the entry itself.
    def local(s):
        return 2.0 if s >= 1.0 else 0.5

    def entries(cap):
        return iter([(1.0, 0.25, 7)])

    assert walk_remote(local, 1.0, entries) == (1.0, 7)


# ---------------------------------------------------------------- hierarchy


def test_hierarchy_is_balanced_and_contains_children(rng):
    cones = [random_cone(rng) for _ in range(64)]
    h = ConeHierarchy(cones)
    assert h.audit()
    assert h.depth() <= 8


def test_hierarchy_entries_match_scan(rng):
    for _ in range(100):
        cones = [random_cone(rng) for _ in range(int(rng.integers(1, 30)))]
        h = ConeHierarchy(cones)
        y = rng.uniform(0, 4, 2)
        cap = float(rng.uniform(0.3, 2.0))
        got = next((e for e, s, _ in h.iter_entries(y, lambda: cap) if s < cap), math.inf)
        assert got == pytest.approx(t_remote_scan(cones, y, cap), abs=1e-9)


def test_min_slope_below_all_cones(rng):
    cones = [RemoteCone(np.array([[1.0, 1.0]]), [5.0], 0.5)]
    simplex = np.array([[0, 0, 0], [1, 0, 0.1], [0, 1, 0.1]], dtype=float)
    assert min_slope_intersecting(ConeHierarchy(cones), simplex) == math.inf


def test_min_slope_single_pierced_cone():
    cones = [RemoteCone(np.array([[0.0, 0.0]]), [0.0], 0.7),
             RemoteCone(np.array([[9.0, 9.0]]), [0.0], 0.2)]
    simplex = np.array([[0, 0, 1.0], [0.1, 0, 1.0], [0, 0.1, 1.0]])
    assert min_slope_intersecting(ConeHierarchy(cones), simplex) == 0.7


def test_cone_predicate_against_sampling(rng):
    for _ in range(100):
        cone = random_cone(rng)
        simplex = random_simplex(rng)
        w = rng.dirichlet(np.ones(3), size=500)
        pts = np.vstack([simplex, w @ simplex])
        sampled = any(p[-1] > cone.entry(p[:-1]) for p in pts)
        if sampled:
            assert cone_meets_simplex(cone, simplex)


def test_min_slope_matches_scan(rng):
    for _ in range(200):
        cones = [random_cone(rng) for _ in range(int(rng.integers(1, 20)))]
        h = ConeHierarchy(cones)
        simplex = random_simplex(rng)
        assert h.min_slope_intersecting(simplex) == min_slope_scan(cones, simplex)


def test_update_same_cone_changes_nothing(rng):
    cones = [random_cone(rng) for _ in range(10)]
    h = ConeHierarchy(cones)
    assert update_hierarchy(h, 3, cones[3]) == 0


def test_update_lower_slope(rng):
    cones = [random_cone(rng) for _ in range(10)]
    h = ConeHierarchy(cones)
    before = h.slope[h.root]
    c = cones[4]
    update_hierarchy(h, 4, RemoteCone(c.coords, c.times, min(c.slope, before) / 2))
    assert h.slope[h.root] <= before
    assert h.audit()


def test_updates_then_rebuild(rng):
    cones = [random_cone(rng) for _ in range(20)]
    h = ConeHierarchy(list(cones))
    for _ in range(15):
        key = int(rng.integers(20))
        cones[key] = random_cone(rng)
        h.update(key, cones[key])
    fresh = ConeHierarchy(cones)
    for _ in range(30):
        simplex = random_simplex(rng)
        assert h.min_slope_intersecting(simplex) == fresh.min_slope_intersecting(simplex)


# ---------------------------------------------------------------- lookahead


def test_constant_field_collapses_horizon(rng):
    field = WavespeedField.constant(1.0)
    for _ in range(30):
        coords = rng.uniform(0, 1, (3, 2))
        times = rng.uniform(0, 0.2, 3)
        try:
            base = is_h_progressive(coords, times, 0, field, PARAMS)
        except Exception:
            continue
        for h in (1, 2, 3):
            assert is_h_progressive(coords, times, h, field, PARAMS) == base


def test_flat_triangle_progressive_for_all_h(rng):
    field = WavespeedField(1.0, [Region(Disc((0.5, 0.5), 0.4), 0.05, math.inf, 0.3)])
    coords = np.array([[0, 0], [1, 0], [0.4, 0.8]])
    for h in range(4):
        assert is_h_progressive(coords, np.zeros(3), h, field, PARAMS)


def step_up_field(t0=0.3):
    return WavespeedField(1.0, [Region(HalfSpace((-1.0, 0.0), -0.6), t0, math.inf, 0.5)])


def test_maximize_progress_constant_equals_linear():
    field = WavespeedField.constant(1.0)
    coords = np.array([[0, 0], [1, 0], [0, 1.0]])
    times = np.zeros(3)
    front = Front(Triangulation(coords, [[0, 1, 2]]), times)
    linear = min(causal_sup_2d(front, 0, (0, 1, 2), 1.0).sup_value,
                 progress_sup_2d(front, 0, (0, 1, 2), 1.0, 0.5).sup_value)
    got = maximize_progress(coords, times, 0, 1, field, PARAMS)
    assert got == pytest.approx(linear, rel=1e-8)
    assert got <= linear


@pytest.mark.parametrize("h", [1, 2])
def test_maximize_progress_step_up(h):
    field = step_up_field()
    coords = np.array([[0, 0], [1, 0], [0.2, 0.9]])
    times = np.zeros(3)
    got = maximize_progress(coords, times, 0, h, field, PARAMS)
    lifted = np.array([got, 0.0, 0.0])
    assert is_h_progressive(coords, lifted, h, field, PARAMS)
    guaranteed = PARAMS.eps_hat * field.min_slope * 1.0 * (0.9 / math.hypot(0.8, 0.9))
    assert got - 0.0 >= guaranteed * (1 - 1e-9)


def test_estimate_not_converged_carries_value():
    field = step_up_field()
    coords = np.array([[0, 0], [1, 0], [0.2, 0.9]])
    with pytest.raises(EstimateNotConverged) as info:
        estimate_progress(coords, np.zeros(3), 0, 2, field, PARAMS, cap=0)
    assert info.value.last_value == 0.0


def test_hl_progressive_unrolled(rng):
    field = step_up_field(0.1)
    for _ in range(20):
        coords = rng.uniform(0, 1, (3, 2))
        times = rng.uniform(0, 0.1, 3)
        try:
            got = is_hl_progressive(coords, times, 1, 2, field, PARAMS)
        except Exception:
            continue

        def adaptive(c, t):
            return is_h_progressive(c, t, 1, field, PARAMS, adaptive=True)

        def plain(c, t):
            return is_h_progressive(c, t, 1, field, PARAMS)

        expected = plain(coords, times) and all(
            plain(c1, t1) and all(adaptive(c2, t2) for c2, t2 in bisection_children(c1, t1))
            for c1, t1 in bisection_children(coords, times))
        assert got == expected


def test_mach_decisions():
    coords = np.array([[0, 0], [1, 0], [0, 1.0]])
    assert mach_refine_decision(coords, np.zeros(3), WavespeedField.constant(1.0)) == COARSENABLE
    straddle = WavespeedField(1.0, [Region(HalfSpace((1.0, 0.0), 0.5), -math.inf, math.inf, 5.0)])
    assert mach_refine_decision(coords, np.zeros(3), straddle) == REFINE
    middle = WavespeedField(1.0, [Region(HalfSpace((1.0, 0.0), 0.5), -math.inf, math.inf, 3.0)])
    assert mach_refine_decision(coords, np.zeros(3), middle) == KEEP

"""Cones of influence of front facets and the nonlocal tentpole limit.

A remote cone belongs to a facet ``F`` of the front outside the star of the
vertex being pitched.  Its lower boundary over a spatial point ``y`` is

    e_F(y) = min over x in F of  τ(x) + S_F |y - x|,

so a vertical tentpole at ``y`` enters the cone at time ``e_F(y)``.  Once
inside, the slope available to the new facets drops to ``S_F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class RemoteCone:
    """Cone of influence of a point, segment or triangle lifted to the front.

    ``coords`` has one row per vertex (spatial coordinates) and ``times``
    the matching front times.  A single row gives an ordinary circular cone.
    """

    coords: np.ndarray
    times: np.ndarray
    slope: float

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None] if coords.shape[0] != 1 else coords[None, :]
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float).reshape(-1))
        if not self.slope > 0:
            raise InvalidArgument(f"cone slope must be positive, got {self.slope}")

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def t_min(self) -> float:
        return float(self.times.min())

    def entry(self, y) -> float:
        """Time at which the vertical line through ``y`` enters the cone."""
        y = np.asarray(y, dtype=float).reshape(-1)
        return facet_entry(self.coords, self.times, self.slope, y)


def _segment_entry(a, b, ta, tb, slope, y) -> float:
    d = b - a
    length = float(np.linalg.norm(d))
    if length == 0.0:
        return min(ta, tb) + slope * float(np.linalg.norm(y - a))
    u = d / length
    s0 = float((y - a) @ u)
    off = float(np.linalg.norm((y - a) - s0 * u))
    alpha = (tb - ta) / length
    ratio = alpha / slope
    if abs(ratio) >= 1.0:
        # A facet at least as steep as the cone: the minimum sits at an end.
        s = 0.0 if ta + slope * float(np.linalg.norm(y - a)) <= tb + slope * float(
            np.linalg.norm(y - b)) else length
    else:
        s = s0 - off * ratio / math.sqrt(1.0 - ratio * ratio)
        s = min(max(s, 0.0), length)
    ends = [
        ta + slope * float(np.linalg.norm(y - a)),
        tb + slope * float(np.linalg.norm(y - b)),
        ta + alpha * s + slope * math.hypot(s - s0, off),
    ]
    return min(ends)


def facet_entry(coords, times, slope, y) -> float:
    """Exact ``min_x τ(x) + S|y-x|`` over the convex hull of ``coords``."""
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    k, d = coords.shape
    if k == 1:
        return float(times[0]) + slope * float(np.linalg.norm(y - coords[0]))
    if d == 1:
        x = float(y[0])
        lo, hi = float(coords[:, 0].min()), float(coords[:, 0].max())
        if lo <= x <= hi and k == 2:
            a, b = coords[:, 0]
            ta, tb = times
            inside = ta + (x - a) * (tb - ta) / (b - a) if b != a else min(ta, tb)
            return min(float(inside), *(float(t) + slope * abs(x - c)
                                        for t, c in zip(times, coords[:, 0])))
        return min(float(t) + slope * abs(x - c) for t, c in zip(times, coords[:, 0]))
    best = math.inf
    for i in range(k):
        j = (i + 1) % k
        if k == 2 and i == 1:
            break
        best = min(best, _segment_entry(coords[i], coords[j], times[i], times[j], slope, y))
    if k == 3:
        a, b, c = coords
        mat = np.column_stack([b - a, c - a])
        lam = np.linalg.solve(mat, y - a)
        if lam.min() >= 0.0 and lam.sum() <= 1.0:
            inside = times[0] + lam[0] * (times[1] - times[0]) + lam[1] * (times[2] - times[0])
            best = min(best, float(inside))
    return best


def _entries_scan(cones, y, exclude=()):
    out = []
    for key, cone in enumerate(cones):
        if key in exclude:
            continue
        out.append((cone.entry(y), cone.slope, key))
    out.sort()
    return out


def walk_remote(local_sup, start_slope: float, entries):
    """Largest tentpole top once remote cones may lower the slope.

    ``local_sup(S)`` returns the supremum allowed by the local constraints
    when the slope available to the new facets is capped at ``S``.
    ``entries(cap)`` must return an iterator of ``(entry time, slope, key)``
    in increasing entry time; ``cap()`` reports the current slope cap so
    the iterator may skip cones that can no longer lower it.

    Returns ``(value, key)`` where ``key`` names the binding remote cone or
    is ``None`` when only local constraints bind.
    """
    cap = start_slope
    f = local_sup(cap)
    binding = None
    for e, slope, key in entries(lambda: cap):
        if e >= f:
            break
        if slope >= cap:
            continue
        cap = slope
        g = local_sup(cap)
        if g <= e:
            return e, key
        f, binding = g, key
    return f, binding


def t_remote_scan(cones, y, local_slope: float = math.inf, exclude=()) -> float:
    """First entry into any cone whose slope is below ``local_slope``."""
    for e, slope, _ in _entries_scan(cones, y, exclude):
        if slope < local_slope:
            return e
    return math.inf


def _front_cones(front, p, field):
    from ..front import facet_slope

    cones, star = [], set(front.tri.star.get(p, []))
    for ci, cell in enumerate(front.tri.cells):
        if ci in star:
            continue
        cones.append(RemoteCone(front.tri.points[cell], front.times[cell],
                                facet_slope(front, cell, field)))
    return cones


def t_remote_exact_1d(front, p, cones=None, field=None, local_slope=math.inf,
                      hierarchy=None) -> float:
    """Time at which the vertical ray at ``p`` first enters a binding remote cone.

    ``cones`` defaults to the cones of every facet outside the star of ``p``
    (their slopes taken from ``field``).  Cones whose slope is not below
    ``local_slope`` never bind and are ignored; ``+inf`` means no binding
    cone exists.  With ``hierarchy`` the answer comes from a best-first
    traversal instead of a scan.
    """
    y = front.points[p]
    if hierarchy is not None:
        star = set(hierarchy.keys_for_vertex(p)) if hasattr(hierarchy, "keys_for_vertex") else set()
        for e, slope, _ in hierarchy.iter_entries(y, lambda: local_slope, exclude=star):
            if slope < local_slope:
                return e
        return math.inf
    if cones is None:
        if field is None:
            raise InvalidArgument("either cones or field is required")
        cones = _front_cones(front, p, field)
    return t_remote_scan(cones, y, local_slope)


t_remote_exact_2d = t_remote_exact_1d


def t_remote_binary_search(front, p, lo, hi, tol, cones=None, field=None,
                           local_slope=math.inf, hierarchy=None):
    """Bisection for the first time a binding remote cone meets the tentpole.

    Each probe asks for the minimum slope among cones whose interior meets
    the speculative tentpole from ``τ(p)`` to the probe time.  Returns the
    upper end of the final bracket, so the answer is within ``tol`` of the
    exact entry and never below it; ``hi`` when no binding cone meets the
    tentpole by ``hi``.  The result is a :class:`SearchResult`, a float
    that also carries the number of bisection steps.
    """
    from .hierarchy import ConeHierarchy

    if not lo < hi:
        raise InvalidArgument(f"invalid bracket [{lo}, {hi}]")
    if not tol > 0:
        raise InvalidArgument(f"tolerance must be positive, got {tol}")
    if hierarchy is None:
        if cones is None:
            if field is None:
                raise InvalidArgument("either cones or field is required")
            cones = _front_cones(front, p, field)
        hierarchy = ConeHierarchy(cones)
        exclude = set()
    else:
        exclude = set(hierarchy.keys_for_vertex(p))
    x = np.asarray(front.points[p], dtype=float)
    t0 = front.tau(p)

    def hits(t):
        seg = np.array([[*x, t0], [*x, t]])
        return hierarchy.min_slope_intersecting(seg, exclude=exclude) < local_slope

    iterations = 0
    if not hits(hi):
        return SearchResult(hi, iterations)
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        iterations += 1
        if hits(mid):
            b = mid
        else:
            a = mid
    return SearchResult(b, iterations)


class SearchResult(float):
    """A float that also records how many bisection steps produced it."""

    def __new__(cls, value, iterations):
        obj = super().__new__(cls, value)
        obj.iterations = iterations
        return obj

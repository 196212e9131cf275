"""Bounding cone hierarchy over the cones of influence of front facets.

Each internal node stores a box containing the spatial extent of every
facet below it, the lowest front time below it and the smallest slope
below it.  The node's cone ``t_min + s·dist(y, box)`` therefore lies below
every leaf cone it covers, which is what makes best-first traversal exact.
"""

from __future__ import annotations

import heapq
import itertools
import math
from functools import lru_cache

import numpy as np

from .remote import RemoteCone

#: Relative tolerance when deciding that an internal node might be hit.
NODE_MARGIN = 1e-12


@lru_cache(maxsize=None)
def _combos(n: int, r: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), r)), dtype=np.int64).reshape(-1, r)


def _pieces(simplex, corners, times, slope):
    """Affine pieces ``a + g·u`` whose maximum is the dual function φ(u)."""
    ys, ts = simplex[:, :-1], simplex[:, -1]
    a = (ts[:, None] - times[None, :]).reshape(-1)
    g = (slope * (corners[None, :, :] - ys[:, None, :])).reshape(-1, ys.shape[1])
    return a, g


def dual_minimum(simplex, corners, times, slope) -> float:
    """``min over |u|<=1`` of ``max_i(t_i - S u·y_i) + max_j(S u·x_j - τ_j)``.

    The value is positive exactly when some point of the spacetime simplex
    lies strictly inside the cone of the convex hull of ``corners`` lifted
    to ``times``.  The minimum of this convex piecewise-linear function over
    the unit ball is attained at a vertex of its cell structure, so it is
    found by enumerating those candidates.
    """
    simplex = np.asarray(simplex, dtype=float)
    corners = np.asarray(corners, dtype=float)
    times = np.asarray(times, dtype=float)
    a, g = _pieces(simplex, corners, times, slope)
    n, d = g.shape
    cands = []
    if d == 1:
        cands.append(np.array([[-1.0], [1.0]]))
        if n >= 2:
            idx = _combos(n, 2)
            dg = g[idx[:, 0], 0] - g[idx[:, 1], 0]
            ok = np.abs(dg) > 1e-300
            u = (a[idx[ok, 1]] - a[idx[ok, 0]]) / dg[ok]
            u = u[np.abs(u) <= 1.0]
            cands.append(u[:, None])
    else:
        cands.append(np.zeros((1, 2)))
        norms = np.linalg.norm(g, axis=1)
        nz = norms > 0
        cands.append(-g[nz] / norms[nz, None])
        if n >= 2:
            idx = _combos(n, 2)
            w = g[idx[:, 0]] - g[idx[:, 1]]
            c = a[idx[:, 1]] - a[idx[:, 0]]
            wn = np.linalg.norm(w, axis=1)
            ok = wn > 1e-300
            w, c, wn = w[ok], c[ok], wn[ok]
            dist = c / wn
            ok = np.abs(dist) <= 1.0
            w, dist, wn = w[ok], dist[ok], wn[ok]
            unit = w / wn[:, None]
            perp = np.column_stack([-unit[:, 1], unit[:, 0]])
            h = np.sqrt(np.maximum(0.0, 1.0 - dist * dist))
            base = unit * dist[:, None]
            cands += [base + perp * h[:, None], base - perp * h[:, None]]
        if n >= 3:
            idx = _combos(n, 3)
            m = np.stack([g[idx[:, 0]] - g[idx[:, 1]], g[idx[:, 0]] - g[idx[:, 2]]], axis=1)
            rhs = np.column_stack([a[idx[:, 1]] - a[idx[:, 0]], a[idx[:, 2]] - a[idx[:, 0]]])
            det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
            scale = np.abs(m).reshape(len(m), -1).max(axis=1) ** 2
            ok = np.abs(det) > 1e-14 * np.maximum(scale, 1e-300)
            m, rhs, det = m[ok], rhs[ok], det[ok]
            ux = (rhs[:, 0] * m[:, 1, 1] - m[:, 0, 1] * rhs[:, 1]) / det
            uy = (m[:, 0, 0] * rhs[:, 1] - rhs[:, 0] * m[:, 1, 0]) / det
            u = np.column_stack([ux, uy])
            cands.append(u[np.linalg.norm(u, axis=1) <= 1.0])
    pts = np.vstack([c for c in cands if len(c)])
    norms = np.linalg.norm(pts, axis=1)
    big = norms > 1.0
    pts[big] /= norms[big, None]
    values = (a[None, :] + pts @ g.T).max(axis=1)
    return float(values.min())


def _box_corners(lo, hi) -> np.ndarray:
    return np.array(list(itertools.product(*zip(lo, hi))), dtype=float)


def cone_meets_simplex(cone: RemoteCone, simplex) -> bool:
    """Exact leaf test: does the open cone of ``cone`` meet ``simplex``?"""
    simplex = np.asarray(simplex, dtype=float)
    if simplex[:, -1].max() <= cone.t_min:
        return False
    if any(pt[-1] > cone.entry(pt[:-1]) for pt in simplex):
        return True
    return dual_minimum(simplex, cone.coords, cone.times, cone.slope) > 0.0


class ConeHierarchy:
    """Balanced binary tree of bounding cones.

    ``cones`` are indexed by position; that index is the leaf key used by
    ``exclude`` sets and :meth:`update`.  ``vertex_keys`` optionally maps a
    front vertex to the keys of the facets in its star.
    """

    def __init__(self, cones, vertex_keys=None):
        self.cones = list(cones)
        self.vertex_keys = dict(vertex_keys or {})
        self.build()

    def keys_for_vertex(self, p) -> tuple:
        return tuple(self.vertex_keys.get(p, ()))

    # ---------------------------------------------------------- structure

    def build(self) -> None:
        self.lo, self.hi, self.tmin, self.slope = [], [], [], []
        self.kids, self.leaf, self.parent = [], [], []
        self.leaf_node: dict = {}
        self.built_count = len(self.cones)
        if not self.cones:
            self.root = None
            return
        centers = np.array([c.coords.mean(axis=0) for c in self.cones])
        self.root = self._build(list(range(len(self.cones))), centers, None)

    def _alloc(self, parent) -> int:
        self.lo.append(None)
        self.hi.append(None)
        self.tmin.append(math.inf)
        self.slope.append(math.inf)
        self.kids.append(())
        self.leaf.append(-1)
        self.parent.append(parent)
        return len(self.lo) - 1

    def _build(self, keys, centers, parent) -> int:
        node = self._alloc(parent)
        if len(keys) == 1:
            key = keys[0]
            self.leaf[node] = key
            self.leaf_node[key] = node
            self._refresh_leaf(node)
            return node
        pts = centers[keys]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = sorted(keys, key=lambda k: (centers[k][axis], k))
        half = len(order) // 2
        left = self._build(order[:half], centers, node)
        right = self._build(order[half:], centers, node)
        self.kids[node] = (left, right)
        self._refresh_internal(node)
        return node

    def _refresh_leaf(self, node) -> None:
        cone = self.cones[self.leaf[node]]
        self.lo[node] = cone.coords.min(axis=0)
        self.hi[node] = cone.coords.max(axis=0)
        self.tmin[node] = cone.t_min
        self.slope[node] = cone.slope

    def _refresh_internal(self, node) -> bool:
        left, right = self.kids[node]
        lo = np.minimum(self.lo[left], self.lo[right])
        hi = np.maximum(self.hi[left], self.hi[right])
        tmin = min(self.tmin[left], self.tmin[right])
        slope = min(self.slope[left], self.slope[right])
        changed = not (np.array_equal(lo, self.lo[node]) and np.array_equal(hi, self.hi[node])
                       and tmin == self.tmin[node] and slope == self.slope[node])
        self.lo[node], self.hi[node], self.tmin[node], self.slope[node] = lo, hi, tmin, slope
        return changed

    def update(self, key: int, cone: RemoteCone) -> int:
        """Replace a leaf cone and re-tighten its ancestors; returns nodes changed."""
        self.cones[key] = cone
        node = self.leaf_node[key]
        self._refresh_leaf(node)
        changed = 0
        up = self.parent[node]
        while up is not None:
            if self._refresh_internal(up):
                changed += 1
            up = self.parent[up]
        return changed

    def needs_rebuild(self, leaf_count: int) -> bool:
        """True when the leaf count moved by more than a quarter since the build."""
        return abs(leaf_count - self.built_count) > 0.25 * max(self.built_count, 1)

    def depth(self) -> int:
        def walk(n):
            return 1 if not self.kids[n] else 1 + max(walk(k) for k in self.kids[n])

        return 0 if self.root is None else walk(self.root)

    def audit(self) -> bool:
        """Every leaf cone lies inside the cone of each of its ancestors."""
        for key, node in self.leaf_node.items():
            cone = self.cones[key]
            up = node
            while up is not None:
                if (np.any(cone.coords < self.lo[up]) or np.any(cone.coords > self.hi[up])
                        or cone.t_min < self.tmin[up] or cone.slope < self.slope[up]):
                    return False
                up = self.parent[up]
        return True

    # ------------------------------------------------------------ queries

    def _node_entry(self, node, y) -> float:
        if self.leaf[node] >= 0:
            return self.cones[self.leaf[node]].entry(y)
        gap = np.maximum(0.0, np.maximum(self.lo[node] - y, y - self.hi[node]))
        return self.tmin[node] + self.slope[node] * float(np.linalg.norm(gap))

    def iter_entries(self, y, cap=lambda: math.inf, exclude=()):
        """Yield ``(entry, slope, key)`` for leaf cones in increasing entry time.

        Subtrees whose smallest slope is not below ``cap()`` are skipped.
        """
        if self.root is None:
            return
        y = np.asarray(y, dtype=float).reshape(-1)
        counter = itertools.count()
        heap = [(self._node_entry(self.root, y), next(counter), self.root)]
        while heap:
            e, _, node = heapq.heappop(heap)
            if self.slope[node] >= cap():
                continue
            key = self.leaf[node]
            if key >= 0:
                if key not in exclude:
                    yield e, self.slope[node], key
                continue
            for kid in self.kids[node]:
                heapq.heappush(heap, (self._node_entry(kid, y), next(counter), kid))

    def _node_may_meet(self, node, simplex) -> bool:
        if simplex[:, -1].max() <= self.tmin[node]:
            return False
        corners = _box_corners(self.lo[node], self.hi[node])
        times = np.full(len(corners), self.tmin[node])
        value = dual_minimum(simplex, corners, times, self.slope[node])
        scale = 1.0 + float(np.abs(simplex[:, -1]).max()) + abs(self.tmin[node])
        return value > -NODE_MARGIN * scale

    def min_slope_intersecting(self, simplex, exclude=()) -> float:
        """Smallest slope among leaf cones whose interior meets ``simplex``.

        ``simplex`` is an array of spacetime points (time last).  Returns
        ``+inf`` when no cone is met.
        """
        if self.root is None:
            return math.inf
        simplex = np.asarray(simplex, dtype=float)
        counter = itertools.count()
        heap = [(self.slope[self.root], next(counter), self.root)]
        while heap:
            slope, _, node = heapq.heappop(heap)
            key = self.leaf[node]
            if key >= 0:
                if key not in exclude and cone_meets_simplex(self.cones[key], simplex):
                    return slope
                continue
            if not self._node_may_meet(node, simplex):
                continue
            for kid in self.kids[node]:
                heapq.heappush(heap, (self.slope[kid], next(counter), kid))
        return math.inf


def update_hierarchy(hierarchy: ConeHierarchy, key: int, cone: RemoteCone) -> int:
    return hierarchy.update(key, cone)


def min_slope_intersecting(hierarchy: ConeHierarchy, simplex, exclude=()) -> float:
    return hierarchy.min_slope_intersecting(simplex, exclude)


def min_slope_scan(cones, simplex, exclude=()) -> float:
    """Exhaustive oracle for :meth:`ConeHierarchy.min_slope_intersecting`."""
    simplex = np.asarray(simplex, dtype=float)
    best = math.inf
    for key, cone in enumerate(cones):
        if key not in exclude and cone_meets_simplex(cone, simplex):
            best = min(best, cone.slope)
    return best

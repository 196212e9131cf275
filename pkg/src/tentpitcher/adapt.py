"""Newest-vertex bisection forest with earnest and lazy propagation and coarsening.

Every triangle is stored as ``(apex, b, c)`` in counter-clockwise order; its
base is the edge ``bc``.  Bisecting an edge splits every leaf incident on it
into two children whose apex is the new midpoint.  When the bisected edge is
not the base of a leaf, that leaf becomes *dirty* and its children are
*transient* until a clean-up restores the newest-vertex structure.

Clean-up flips happen inside a dirty triangle, which stays planar until it
is cleaned, so they are pure retriangulations that add no spacetime element.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClassUndefined,
    CoarsenRejected,
    FlipRejected,
    InvariantViolation,
    NotALeaf,
)
from .front import Front, Triangulation, simplex_gradient
from .mesh_core import SpaceMesh, simplex_measure
from .spacetime import INFLOW, OUTFLOW, Patch, make_element

#: Relative tolerance on ``|τ(s) - chord|`` for coarsening to be allowed.
COPLANAR_RTOL = 1e-9


def _edge(u: int, v: int) -> tuple:
    return (u, v) if u < v else (v, u)


def _orient(a, b, c) -> float:
    return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def split_verts(verts: tuple, u: int, v: int, m: int) -> tuple:
    """Children of triangle ``verts`` when its edge ``uv`` is split at ``m``.

    Rotating ``verts`` so that the vertex ``x`` opposite ``uv`` comes first
    gives ``(x, y, z)``; the children are ``(m, x, y)`` and ``(m, z, x)``,
    both keeping the parent's orientation.
    """
    i = next(k for k, w in enumerate(verts) if w != u and w != v)
    x, y, z = verts[i], verts[(i + 1) % 3], verts[(i + 2) % 3]
    return (m, x, y), (m, z, x)


@dataclass(eq=False)
class Node:
    """A triangle in the refinement forest."""

    id: int
    verts: tuple
    parent: "Node | None"
    level: int
    root: int
    children: list = field(default_factory=list)
    dirty: bool = False
    split_edge: tuple | None = None
    coarsenable: bool = False
    flipped: bool = False
    alive: bool = True

    @property
    def apex(self) -> int:
        return self.verts[0]

    @property
    def base(self) -> tuple:
        return _edge(self.verts[1], self.verts[2])

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def transient(self) -> bool:
        return self.parent is not None and self.parent.dirty

    def edges(self) -> list:
        a, b, c = self.verts
        return [_edge(a, b), _edge(b, c), _edge(a, c)]

    def __repr__(self) -> str:
        flags = "D" if self.dirty else ""
        return f"Node({self.id}, {self.verts}, L{self.level}{flags})"


@dataclass
class Bisection:
    edge: tuple
    midpoint: int
    split: tuple


class RefForest:
    """Refinement forest whose leaves form the current front triangulation.

    The forest also owns the vertex table and the front time of every
    vertex, since refinement creates vertices and coarsening retires them.
    """

    def __init__(self, points, cells, apex=None, times=None, boundary=None):
        pts = np.asarray(points, dtype=float)
        self.points: list = [row.copy() for row in pts]
        n = len(self.points)
        self.times: list = [0.0] * n if times is None else [float(t) for t in times]
        self.boundary: list = [False] * n if boundary is None else [bool(b) for b in boundary]
        self.alive: list = [True] * n
        self.nodes: list = []
        self.roots: list = []
        self.log: list = []
        self._leaves: dict = {}
        self._edge_leaves = defaultdict(set)
        self._vertex_leaves = defaultdict(set)
        self._active: set = set()
        self._classes: dict = {}
        self._version = 0
        self._snapshot = None
        for i, cell in enumerate(np.asarray(cells, dtype=np.int64)):
            a = int(apex[i]) if apex is not None else int(cell[0])
            b, c = (int(v) for v in cell if v != a)
            if _orient(self.points[a], self.points[b], self.points[c]) < 0:
                b, c = c, b
            node = self._new_node((a, b, c), None, 0, len(self.roots))
            self.roots.append(node)
            self._add_leaf(node)
        used = set(self._vertex_leaves)
        self.alive = [i in used for i in range(n)]
        if boundary is None:
            for e, owners in self._edge_leaves.items():
                if len(owners) == 1:
                    self.boundary[e[0]] = self.boundary[e[1]] = True
        self.initial_max_degree = self.max_degree()

    @classmethod
    def from_mesh(cls, mesh: SpaceMesh, times=None) -> "RefForest":
        return cls(mesh.points, mesh.cells, mesh.apex, times, mesh.boundary)

    # ----------------------------------------------------------- bookkeeping

    def _new_node(self, verts, parent, level, root, flipped=False) -> Node:
        node = Node(len(self.nodes), tuple(int(v) for v in verts), parent, level, root,
                    flipped=flipped)
        self.nodes.append(node)
        return node

    def _add_leaf(self, node: Node) -> None:
        self._leaves[node.id] = node
        for e in node.edges():
            self._edge_leaves[e].add(node.id)
        for v in node.verts:
            self._vertex_leaves[v].add(node.id)
        self._version += 1

    def _remove_leaf(self, node: Node) -> None:
        del self._leaves[node.id]
        for e in node.edges():
            owners = self._edge_leaves[e]
            owners.discard(node.id)
            if not owners:
                del self._edge_leaves[e]
        for v in node.verts:
            owners = self._vertex_leaves[v]
            owners.discard(node.id)
            if not owners:
                del self._vertex_leaves[v]
        self._version += 1

    def _new_vertex(self, xy, t, boundary) -> int:
        self.points.append(np.asarray(xy, dtype=float))
        self.times.append(float(t))
        self.boundary.append(bool(boundary))
        self.alive.append(True)
        return len(self.points) - 1

    def _make_children(self, node: Node, u: int, v: int, m: int) -> list:
        kids = [
            self._new_node(vs, node, node.level + 1, node.root, node.flipped)
            for vs in split_verts(node.verts, u, v, m)
        ]
        node.children = kids
        return kids

    def _retire(self, node: Node) -> None:
        """Drop a whole subtree (used when restructuring)."""
        if node.id in self._leaves:
            self._remove_leaf(node)
        node.alive = False
        for kid in node.children:
            self._retire(kid)

    # --------------------------------------------------------------- queries

    @property
    def leaves(self) -> list:
        return sorted(self._leaves.values(), key=lambda n: n.id)

    def leaves_on_edge(self, u: int, v: int) -> list:
        return [self.nodes[i] for i in sorted(self._edge_leaves.get(_edge(u, v), ()))]

    def incident_leaves(self, v: int) -> list:
        return [self.nodes[i] for i in sorted(self._vertex_leaves.get(v, ()))]

    def neighbor(self, node: Node, edge: tuple):
        others = [i for i in self._edge_leaves.get(edge, ()) if i != node.id]
        return self.nodes[others[0]] if others else None

    def vertex_neighbors(self, v: int) -> set:
        out = set()
        for i in self._vertex_leaves.get(v, ()):
            out.update(self.nodes[i].verts)
        out.discard(v)
        return out

    def degree(self, v: int) -> int:
        return len(self.vertex_neighbors(v))

    def max_degree(self) -> int:
        return max((self.degree(v) for v in list(self._vertex_leaves)), default=0)

    def leaf_containing(self, x) -> Node:
        x = np.asarray(x, dtype=float)
        for node in self.leaves:
            a, b, c = (self.points[v] for v in node.verts)
            lam = np.linalg.solve(np.column_stack([b - a, c - a]), x - a)
            if lam.min() >= -1e-12 and lam.sum() <= 1 + 1e-12:
                return node
        raise KeyError(f"no leaf contains {x.tolist()}")

    def triangulation(self) -> Triangulation:
        if self._snapshot is None or self._snapshot[0] != self._version:
            cells = np.array([n.verts for n in self.leaves], dtype=np.int64).reshape(-1, 3)
            self._snapshot = (self._version, Triangulation(np.array(self.points), cells))
        return self._snapshot[1]

    def front(self) -> Front:
        return Front(self.triangulation(), np.array(self.times))

    def signature(self, digits: int = 12) -> frozenset:
        """Geometry-only description of the leaf set, for isomorphism checks."""
        out = set()
        for node in self.leaves:
            pts = [tuple(np.round(self.points[v], digits)) for v in node.verts]
            out.add((pts[0], frozenset(pts)))
        return frozenset(out)

    def dirty_nodes(self) -> list:
        return [n for n in self.nodes if n.alive and n.dirty]

    # ------------------------------------------------------------ bisection

    def bisect_edge(self, edge: tuple) -> Bisection:
        """Split ``edge`` at its midpoint and every leaf incident on it."""
        u, v = _edge(*edge)
        owners = self.leaves_on_edge(u, v)
        if not owners:
            raise NotALeaf(f"edge {edge} is not an edge of the current triangulation")
        m = self._new_vertex(
            (self.points[u] + self.points[v]) / 2,
            (self.times[u] + self.times[v]) / 2,
            len(owners) == 1,
        )
        for leaf in owners:
            self._remove_leaf(leaf)
            for kid in self._make_children(leaf, u, v, m):
                self._add_leaf(kid)
            if leaf.base != (u, v):
                leaf.dirty = True
                leaf.split_edge = (u, v)
        record = Bisection((u, v), m, tuple(leaf.id for leaf in owners))
        self.log.append(("bisect", record))
        return record

    def bisect_triangle(self, node: Node):
        """Bisect a leaf along its base; the neighbour across it may turn dirty."""
        if not node.alive or not node.is_leaf:
            raise NotALeaf(f"{node} is not a leaf")
        record = self.bisect_edge(node.base)
        return tuple(node.children), record.midpoint

    def _refine_and_propagate(self, node: Node, lazy: bool) -> None:
        if not node.alive or not node.is_leaf:
            return
        base = node.base
        nbr = self.neighbor(node, base)
        if nbr is not None and nbr.transient and nbr.base != base:
            # The neighbour is a transient child that would be split off its
            # base; finish its parent's clean-up first.
            self._clean(nbr.parent, lazy)
            if not node.alive or not node.is_leaf:
                return
            nbr = self.neighbor(node, base)
        pending = nbr.parent if nbr is not None and nbr.transient else None
        self.bisect_edge(base)
        if nbr is None:
            return
        if nbr.dirty:
            if not lazy:
                self._clean(nbr, lazy=False)
        elif pending is not None and pending.id not in self._active:
            self._clean(pending, lazy)

    def _clean(self, dirty: Node, lazy: bool) -> None:
        """Restore newest-vertex structure below a dirty triangle.

        The child opposite the apex is bisected along its base (with
        propagation) and then one or two flips rebuild the canonical
        grandchildren.  This single routine covers the earnest clean-up and
        both lazy variants; the variant only changes how the bisection
        propagates.
        """
        if not dirty.alive or not dirty.dirty or dirty.id in self._active:
            return
        self._active.add(dirty.id)
        try:
            far = next(k for k in dirty.children if dirty.apex not in k.verts)
            if far.is_leaf:
                self._refine_and_propagate(far, lazy)
            if dirty.dirty:
                self._canonicalize(dirty)
        finally:
            self._active.discard(dirty.id)

    def _canonicalize(self, dirty: Node) -> int:
        """Flip a dirty triangle's subdivision into canonical form; returns flips."""
        p = dirty.apex
        r = next(v for v in dirty.split_edge if v != p)
        q = next(v for v in dirty.verts if v not in (p, r))
        near = next(k for k in dirty.children if p in k.verts)
        far = next(k for k in dirty.children if p not in k.verts)
        s = near.apex
        if far.is_leaf or any(not k.is_leaf for k in far.children):
            raise InvariantViolation(f"cannot canonicalize {dirty}: far child not split once")
        m = far.children[0].apex
        t = None
        if not near.is_leaf:
            if any(not k.is_leaf for k in near.children):
                raise InvariantViolation(f"cannot canonicalize {dirty}: near child too deep")
            t = near.children[0].apex
        self._retire(near)
        self._retire(far)
        first, second = self._make_children(dirty, q, r, m)
        with_r = first if r in first.verts else second
        with_q = second if with_r is first else first
        new_leaves = list(self._make_children(with_r, p, r, s))
        if t is None:
            new_leaves.append(with_q)
        else:
            new_leaves += self._make_children(with_q, p, q, t)
        for leaf in new_leaves:
            self._add_leaf(leaf)
        dirty.dirty = False
        dirty.split_edge = None
        self.log.append(("flip", _edge(q, s), _edge(p, m)))
        flips = 1
        if t is not None:
            self.log.append(("flip", _edge(s, t), _edge(m, t)))
            flips = 2
        return flips

    def _propagation(self, fn, node: Node) -> list:
        start = len(self.log)
        fn(node)
        return [rec for kind, *rest in self.log[start:] if kind == "bisect" for rec in rest]

    def refine_earnest(self, node: Node) -> list:
        """Bisect ``node`` and propagate until the triangulation is conforming."""
        if not node.alive or not node.is_leaf:
            raise NotALeaf(f"{node} is not a leaf")
        return self._propagation(lambda n: self._refine_and_propagate(n, lazy=False), node)

    def refine_lazy(self, node: Node) -> list:
        """Bisect ``node`` leaving neighbours dirty where possible.

        A transient leaf cannot be bisected; its parent is cleaned instead
        and the caller should retry on the leaf that now covers the region.
        """
        if not node.alive or not node.is_leaf:
            raise NotALeaf(f"{node} is not a leaf")
        if node.transient:
            return self._propagation(lambda n: self._clean(n.parent, lazy=True), node)
        return self._propagation(lambda n: self._refine_and_propagate(n, lazy=True), node)

    def refine_at(self, x, lazy: bool) -> list:
        """Refine the leaf containing point ``x``; lazily retries past transients."""
        records = []
        while True:
            leaf = self.leaf_containing(x)
            if not lazy:
                return self.refine_earnest(leaf)
            records += self.refine_lazy(leaf)
            if not leaf.transient:
                return records

    def cleanup_before_pitching(self, p: int) -> int:
        """Clean every dirty parent of a leaf incident on ``p``; returns clean-ups."""
        count = 0
        while True:
            dirty = next((n.parent for n in self.incident_leaves(p) if n.transient), None)
            if dirty is None:
                return count
            self._clean(dirty, lazy=True)
            count += 1

    def cleanup_all(self) -> int:
        count = 0
        while True:
            dirty = next((n for n in self.nodes if n.alive and n.dirty), None)
            if dirty is None:
                return count
            self._clean(dirty, lazy=True)
            count += 1

    # ------------------------------------------------------------ edge flips

    def flip_edge(self, u: int, v: int, field=None):
        """Replace the diagonal ``uv`` of a convex quadrilateral by the other one.

        Returns the new diagonal and, when the four front points are not
        coplanar, a one-tetrahedron patch whose inflow facets are the old
        triangles.  Only the two structural patterns of bisection
        (canonical and dirty) and flips between two roots are supported.
        """
        e = _edge(u, v)
        owners = self.leaves_on_edge(*e)
        if len(owners) != 2:
            raise FlipRejected(f"edge {e} is not interior")
        one, two = owners
        a = next(w for w in one.verts if w not in e)
        b = next(w for w in two.verts if w not in e)
        P = self.points
        o_u, o_v = _orient(P[a], P[b], P[u]), _orient(P[a], P[b], P[v])
        scale = max(float(np.linalg.norm(P[a] - P[b])), 1e-300) ** 2
        if not (o_u * o_v < 0 and min(abs(o_u), abs(o_v)) > 1e-12 * scale):
            raise FlipRejected(f"quadrilateral around {e} is not strictly convex")
        patch = self._flip_patch(e, a, b, field)
        new = _edge(a, b)
        if one.parent is None and two.parent is None:
            self._flip_roots(one, two, a, b)
        else:
            self._flip_structure(one, two, e, new)
        self.log.append(("flip", e, new))
        return new, patch

    def _flip_patch(self, e, a, b, field):
        u, v = e
        P, T = self.points, self.times
        lifted = np.array([[*P[w], T[w]] for w in (u, v, a, b)])
        span = max(float(np.ptp(lifted[:, :2], axis=0).max()), 1e-300)
        if simplex_measure(lifted) <= 1e-12 * span ** 3:
            return None
        # Where the diagonals cross, compare the time on each of them.
        mat = np.column_stack([P[v] - P[u], P[a] - P[b]])
        lam, mu = np.linalg.solve(mat, P[a] - P[u])
        t_old = (1 - lam) * T[u] + lam * T[v]
        t_new = (1 - mu) * T[a] + mu * T[b]
        if t_new <= t_old:
            raise FlipRejected("flip would move the front backward in time")
        if field is not None:
            for tri in ((a, b, u), (a, b, v)):
                coords = np.array([P[w] for w in tri])
                times = np.array([T[w] for w in tri])
                grad = float(np.linalg.norm(simplex_gradient(coords, times)))
                if grad >= field.facet_min(coords, times):
                    raise FlipRejected(f"flipped facet {tri} would not be causal")
        keys = [(w, T[w]) for w in (u, v, a, b)]
        labels = (OUTFLOW, OUTFLOW, INFLOW, INFLOW)
        return Patch((make_element(P, keys, labels),), None)

    def _flip_roots(self, one: Node, two: Node, a: int, b: int) -> None:
        from .mesh_core import largest_angle_vertex

        slots = [self.roots.index(one), self.roots.index(two)]
        corners = [w for w in one.verts if w in two.verts]
        for node in (one, two):
            self._remove_leaf(node)
            node.alive = False
        for slot, w in zip(slots, corners):
            tri = [a, b, w]
            apex = largest_angle_vertex(np.array(self.points), tri)
            rest = [x for x in tri if x != apex]
            if _orient(self.points[apex], self.points[rest[0]], self.points[rest[1]]) < 0:
                rest.reverse()
            node = self._new_node((apex, *rest), None, 0, slot, flipped=True)
            self.roots[slot] = node
            self._add_leaf(node)

    def _flip_structure(self, one: Node, two: Node, e: tuple, new: tuple) -> None:
        for cand in {one.parent, two.parent, getattr(one.parent, "parent", None),
                     getattr(two.parent, "parent", None)} - {None}:
            if cand.dirty and self._is_dirty_pair(cand, one, two, e):
                self._canonicalize(cand)
                self.log.pop()
                return
            if not cand.dirty and self._is_canonical_pair(cand, one, two, e):
                self._decanonicalize(cand, one, two)
                return
        raise FlipRejected(f"edge {e} is not part of a bisection pattern")

    def _is_dirty_pair(self, dirty, one, two, e) -> bool:
        near = next(k for k in dirty.children if dirty.apex in k.verts)
        far = next(k for k in dirty.children if dirty.apex not in k.verts)
        if not near.is_leaf or far.is_leaf or any(not k.is_leaf for k in far.children):
            return False
        s = near.apex
        q = next(v for v in dirty.verts if v not in dirty.split_edge)
        pair = {one.id, two.id}
        return e == _edge(q, s) and near.id in pair and bool(pair & {k.id for k in far.children})

    def _is_canonical_pair(self, top, one, two, e) -> bool:
        if top.is_leaf or len(top.children) != 2:
            return False
        p = top.apex
        kids = top.children
        leaf_kids = [k for k in kids if k.is_leaf]
        split_kids = [k for k in kids if not k.is_leaf]
        if len(leaf_kids) != 1 or len(split_kids) != 1:
            return False
        split = split_kids[0]
        if any(not k.is_leaf for k in split.children):
            return False
        m = leaf_kids[0].apex
        pair = {one.id, two.id}
        return (e == _edge(p, m) and leaf_kids[0].id in pair
                and bool(pair & {k.id for k in split.children}))

    def _decanonicalize(self, top: Node, one: Node, two: Node) -> None:
        """Turn a canonical split-then-split subtree into its dirty form."""
        p = top.apex
        leaf_kid = next(k for k in top.children if k.is_leaf)
        split = next(k for k in top.children if not k.is_leaf)
        m = leaf_kid.apex
        s = split.children[0].apex
        x = next(v for v in split.base if v != p)
        q, r = top.verts[1], top.verts[2]
        for kid in list(top.children):
            self._retire(kid)
        near, far = sorted(self._make_children(top, p, x, s), key=lambda k: p not in k.verts)
        for kid in near, far:
            kid.flipped = True
        grand = self._make_children(far, q, r, m)
        for kid in grand:
            kid.flipped = True
        top.dirty = True
        top.split_edge = _edge(p, x)
        for leaf in (near, *grand):
            self._add_leaf(leaf)

    # ------------------------------------------------------------ coarsening

    def _bisected_edge(self, node: Node) -> tuple:
        kids = node.children
        return tuple(sorted(v for v in node.verts if (v in kids[0].verts) != (v in kids[1].verts)))

    def _coplanar_midpoint(self, s: int, q: int, r: int) -> bool:
        T = self.times
        scale = max(1.0, abs(T[q]), abs(T[r]))
        return abs(T[s] - (T[q] + T[r]) / 2) <= COPLANAR_RTOL * scale

    def derefine(self, node: Node, accept=None) -> list:
        """Undo the bisection that created ``node``; may cascade to ancestors.

        ``accept``, when given, is called with the parents about to be
        restored and may veto the merge by returning False.

        Raises:
            CoarsenRejected: with reason ``Root``, ``Leaf``, ``Coplanarity``,
                ``Degree``, ``Pattern`` or ``Progress``.
        """
        merged: list = []
        self._derefine(node, merged, accept)
        return merged

    def _derefine(self, node: Node, merged: list, accept=None) -> None:
        if node.parent is None:
            raise CoarsenRejected("Root", f"{node} has no parent")
        parent = node.parent
        if not node.alive or not all(k.is_leaf and k.alive for k in parent.children):
            raise CoarsenRejected("Leaf", f"{node} or its sibling is not a leaf")
        s = node.apex
        q, r = self._bisected_edge(parent)
        if not self._coplanar_midpoint(s, q, r):
            raise CoarsenRejected("Coplanarity", f"τ({s}) is off the chord {q}-{r}")
        nbrs = self.vertex_neighbors(s)
        others = [n for n in self.incident_leaves(s) if n.parent is not parent]
        pairs = [parent]
        if len(nbrs) == 4 and len(others) == 2:
            other_parent = others[0].parent
            if (other_parent is None or others[1].parent is not other_parent
                    or self._bisected_edge(other_parent) != (q, r)):
                raise CoarsenRejected("Pattern", f"leaves across {q}-{r} are not siblings")
            pairs.append(other_parent)
        elif not (len(nbrs) == 3 and not others and self.boundary[s]):
            raise CoarsenRejected("Degree", f"vertex {s} has degree {len(nbrs)}")
        if accept is not None and not accept(pairs):
            raise CoarsenRejected("Progress", f"merging around {s} breaks a progress constraint")
        for top in pairs:
            for kid in top.children:
                self._remove_leaf(kid)
                kid.alive = False
            top.children = []
            top.dirty = False
            top.split_edge = None
            self._add_leaf(top)
            merged.append(top)
        self.alive[s] = False
        self.log.append(("coarsen", s, tuple(t.id for t in pairs)))
        for top in pairs:
            up = top.parent
            if top.alive and top.is_leaf and up is not None and up.coarsenable:
                try:
                    self._derefine(top, merged, accept)
                except CoarsenRejected:
                    pass

    # ------------------------------------------------------- homothety class

    @staticmethod
    def _shape_key(pts) -> tuple:
        pts = np.asarray(pts, dtype=float)
        pts = pts - pts.mean(axis=0)
        diam = max(float(np.linalg.norm(x - y)) for x in pts for y in pts)
        pts = np.round(pts / diam, 9) + 0.0
        return tuple(sorted(map(tuple, pts)))

    def homothety_class(self, node: Node) -> int:
        """Index of ``node``'s shape among the shapes seen under its root.

        Two triangles share an index when one is a translated and scaled
        copy of the other.  The root itself is class 0.
        """
        if node.flipped:
            raise ClassUndefined(f"{node} has an edge flip in its ancestry")
        registry = self._classes.setdefault(node.root, {})
        if not registry:
            root = self.roots[node.root]
            registry[self._shape_key([self.points[v] for v in root.verts])] = 0
        key = self._shape_key([self.points[v] for v in node.verts])
        return registry.setdefault(key, len(registry))

    def diameter(self, node: Node) -> float:
        pts = [self.points[v] for v in node.verts]
        return max(float(np.linalg.norm(x - y)) for x in pts for y in pts)


def degree_bound(initial_max_degree: int) -> int:
    return max(initial_max_degree + 5, 8)


def subtree_leaves(node: Node) -> list:
    if node.is_leaf:
        return [node]
    out = []
    for kid in node.children:
        out += subtree_leaves(kid)
    return out


def per_triangle_counts(forest: RefForest, records: list, start_leaves: set) -> dict:
    """How many bisections touched each triangle that was a leaf at the start."""
    counts: dict = defaultdict(int)
    for rec in records:
        for nid in rec.split:
            node = forest.nodes[nid]
            while node is not None and node.id not in start_leaves:
                node = node.parent
            if node is not None:
                counts[node.id] += 1
    return dict(counts)


__all__ = [
    "Bisection",
    "Node",
    "RefForest",
    "degree_bound",
    "per_triangle_counts",
    "split_verts",
    "subtree_leaves",
]


"""Geometric primitives and the static space mesh shared by all other modules.

Points are plain numpy arrays of length ``d`` (``d`` is 1 or 2).  Spacetime
points append the time coordinate, so a 2D x Time point has three entries.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateSimplex, IsolatedVertex

#: An angle counts as obtuse only when it exceeds a right angle by this much.
OBTUSE_TOLERANCE = 1e-12
#: A triangle whose area is below ``DEGENERACY_RATIO * diam**2`` is degenerate.
DEGENERACY_RATIO = 1e-12


def _as_points(coords) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def angle_between(u, v) -> float:
    """Unsigned angle between two plane vectors, computed with ``atan2``."""
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), dot)


def distance_to_line(p, a, b) -> float:
    """Distance from ``p`` to the infinite line through ``a`` and ``b``."""
    foot = foot_of_perpendicular(p, a, b)
    return float(np.linalg.norm(np.asarray(p, dtype=float) - foot))


def foot_of_perpendicular(p, a, b) -> np.ndarray:
    """Orthogonal projection of ``p`` onto the line through ``a`` and ``b``.

    The foot may fall outside the segment ``ab``.

    Raises:
        DegenerateSimplex: if ``a`` and ``b`` coincide.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    length_sq = float(ab @ ab)
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1.0)
    if length_sq <= (1e-15 * scale) ** 2:
        raise DegenerateSimplex("line through coincident points")
    t = float((p - a) @ ab) / length_sq
    return a + t * ab


@dataclass(frozen=True)
class TriangleShape:
    """Derived shape quantities of a planar triangle.

    Vertex ``i`` is opposite edge ``i``; ``edge_lengths[i]`` is the length of
    the edge not containing vertex ``i``.
    """

    coords: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.coords, dtype=float).reshape(3, 2)
        object.__setattr__(self, "coords", pts)
        if self.area < DEGENERACY_RATIO * self.diameter ** 2 or self.diameter == 0.0:
            raise DegenerateSimplex(f"degenerate triangle {pts.tolist()}")

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        c = self.coords
        return np.array([
            np.linalg.norm(c[2] - c[1]),
            np.linalg.norm(c[0] - c[2]),
            np.linalg.norm(c[1] - c[0]),
        ])

    @cached_property
    def diameter(self) -> float:
        return float(self.edge_lengths.max())

    @cached_property
    def area(self) -> float:
        c = self.coords
        u, v = c[1] - c[0], c[2] - c[0]
        return 0.5 * abs(u[0] * v[1] - u[1] * v[0])

    @cached_property
    def angles(self) -> np.ndarray:
        c = self.coords
        out = np.empty(3)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            out[i] = angle_between(c[j] - c[i], c[k] - c[i])
        return out

    @cached_property
    def altitudes(self) -> np.ndarray:
        """Distance from each vertex to the line through the opposite edge."""
        return 2.0 * self.area / self.edge_lengths

    @property
    def width(self) -> float:
        return float(self.altitudes.min())

    def phi_edge(self, i: int, j: int) -> float:
        """The factor of the edge joining vertices ``i`` and ``j``.

        It is 1 when neither angle adjacent to the edge is obtuse and the sine
        of the obtuse angle otherwise.
        """
        factor = 1.0
        for v in (i, j):
            if self.angles[v] > math.pi / 2 + OBTUSE_TOLERANCE:
                factor = math.sin(self.angles[v])
        return factor

    def phi(self) -> float:
        return min(self.phi_edge(0, 1), self.phi_edge(1, 2), self.phi_edge(0, 2))


def phi(tri) -> float:
    """Minimum edge factor of a triangle; below 1 exactly when it is obtuse.

    Accepts a :class:`TriangleShape` or a 3x2 array of coordinates.
    """
    shape = tri if isinstance(tri, TriangleShape) else TriangleShape(tri)
    return shape.phi()


def simplex_measure(coords) -> float:
    """Length, area or volume of a k-simplex given as (k+1) points in R^k."""
    pts = _as_points(coords)
    k = pts.shape[0] - 1
    if k == 0:
        return 0.0
    mat = pts[1:] - pts[0]
    if mat.shape[0] != mat.shape[1]:
        gram = mat @ mat.T
        return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(k)
    return abs(float(np.linalg.det(mat))) / math.factorial(k)


def barycentric(simplex, points) -> np.ndarray:
    """Barycentric coordinates of ``points`` (m x k) w.r.t. a full k-simplex."""
    simplex = _as_points(simplex)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mat = (simplex[1:] - simplex[0]).T
    rest = np.linalg.solve(mat, (points - simplex[0]).T).T
    return np.hstack([1.0 - rest.sum(axis=1, keepdims=True), rest])


def halfspaces(simplex) -> tuple[np.ndarray, np.ndarray]:
    """Inequalities ``A x <= b`` describing a full-dimensional k-simplex.

    Row ``i`` bounds the facet opposite vertex ``i``; rows are scaled to unit
    normals so that residuals are distances.
    """
    simplex = _as_points(simplex)
    k = simplex.shape[1]
    inv = np.linalg.inv((simplex[1:] - simplex[0]).T)
    # lambda_j(x) = inv[j-1] @ (x - s0) for j >= 1, lambda_0 = 1 - sum.
    rows = np.vstack([inv.sum(axis=0), -inv])
    offsets = np.concatenate([[1.0 + inv.sum(axis=0) @ simplex[0]], -inv @ simplex[0]])
    norms = np.linalg.norm(rows, axis=1)
    return rows / norms[:, None], offsets / norms


def simplex_intersection_points(a, b, tol: float = 1e-9) -> np.ndarray:
    """Vertices of the intersection of two full-dimensional k-simplices.

    Every vertex of the intersection polytope lies on k of the 2(k+1)
    bounding hyperplanes, so all k-subsets are solved and the feasible
    solutions kept.  Returns an (m, k) array, empty when disjoint.
    """
    a = _as_points(a)
    b = _as_points(b)
    k = a.shape[1]
    ha, oa = halfspaces(a)
    hb, ob = halfspaces(b)
    rows = np.vstack([ha, hb])
    offs = np.concatenate([oa, ob])
    combos = np.array(list(itertools.combinations(range(rows.shape[0]), k)))
    mats = rows[combos]
    rhs = offs[combos]
    dets = np.linalg.det(mats)
    ok = np.abs(dets) > 1e-12
    if not ok.any():
        return np.empty((0, k))
    sols = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    feasible = np.all(sols @ rows.T - offs <= tol * scale, axis=1)
    pts = sols[feasible]
    if pts.shape[0] == 0:
        return pts
    rounded = np.round(pts / (tol * scale * 10)).astype(np.int64)
    _, unique_idx = np.unique(rounded, axis=0, return_index=True)
    return pts[np.sort(unique_idx)]


@dataclass
class ValidationReport:
    """Result of a structural check; empty ``violations`` means valid."""

    violations: list = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, kind: str, detail) -> None:
        self.violations.append((kind, detail))


@dataclass
class SpaceMesh:
    """Immutable input triangulation (segments in 1D, triangles in 2D).

    ``apex`` holds the distinguished newest vertex of each triangle and is
    ``None`` for 1D meshes.
    """

    dim: int
    points: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray | None = None
    apex: np.ndarray | None = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.dim + 1)
        if self.boundary is None:
            self.boundary = self._detect_boundary()
        self.boundary = np.asarray(self.boundary, dtype=bool)
        if self.dim == 2 and self.apex is None:
            self.apex = np.array([largest_angle_vertex(self.points, c) for c in self.cells])
        if self.apex is not None:
            self.apex = np.asarray(self.apex, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return self.points.shape[0]

    @cached_property
    def adjacency(self) -> dict:
        """Map from sorted facet vertex tuple to the indices of incident cells."""
        facets: dict = {}
        for ci, cell in enumerate(self.cells):
            for facet in itertools.combinations(sorted(int(v) for v in cell), self.dim):
                facets.setdefault(facet, []).append(ci)
        return facets

    def _detect_boundary(self) -> np.ndarray:
        flags = np.zeros(self.points.shape[0], dtype=bool)
        for facet, owners in self.adjacency.items():
            if len(owners) == 1:
                flags[list(facet)] = True
        return flags

    @cached_property
    def diameter(self) -> float:
        pts = self.points
        if pts.shape[0] < 2:
            return 0.0
        diffs = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(axis=2)).max())

    def max_star_size(self) -> int:
        """Largest number of cells sharing one vertex."""
        counts = np.bincount(self.cells.ravel(), minlength=self.n_vertices)
        return int(counts.max())

    def vertex_degree(self) -> np.ndarray:
        """Number of distinct edge neighbours of every vertex."""
        nbrs = [set() for _ in range(self.n_vertices)]
        for cell in self.cells:
            for u, v in itertools.combinations(cell, 2):
                nbrs[u].add(int(v))
                nbrs[v].add(int(u))
        return np.array([len(s) for s in nbrs])


def largest_angle_vertex(points, cell) -> int:
    """Vertex of ``cell`` with the largest angle; ties go to the smallest id."""
    order = sorted(int(v) for v in cell)
    shape = TriangleShape(np.asarray(points)[order])
    best = max(range(3), key=lambda i: (round(shape.angles[i], 12), -order[i]))
    return order[best]


def width_at_vertex(points, cells, p: int) -> float:
    """Minimum distance from ``p`` to the affine hull of its link facets.

    Raises:
        IsolatedVertex: if no cell contains ``p``.
    """
    pts = _as_points(points)
    best = math.inf
    for cell in cells:
        if p not in cell:
            continue
        others = [int(v) for v in cell if v != p]
        if len(others) == 1:
            dist = float(np.linalg.norm(pts[p] - pts[others[0]]))
        else:
            dist = distance_to_line(pts[p], pts[others[0]], pts[others[1]])
        best = min(best, dist)
    if best == math.inf:
        raise IsolatedVertex(f"vertex {p} has no incident cell")
    return best


def validate_complex(mesh: SpaceMesh) -> ValidationReport:
    """Check that ``mesh`` is a simplicial complex.

    Reports degenerate cells, vertices that belong to no cell, apex marks
    that are not vertices of their triangle, and cell pairs whose
    intersection is not their common face.
    """
    report = ValidationReport()
    pts = mesh.points
    used = np.zeros(mesh.n_vertices, dtype=bool)
    good_cells = []
    for ci, cell in enumerate(mesh.cells):
        used[cell] = True
        verts = pts[cell]
        diam = max(float(np.linalg.norm(u - v)) for u, v in itertools.combinations(verts, 2))
        size = simplex_measure(verts)
        if len(set(cell.tolist())) < len(cell) or diam == 0.0 or size < DEGENERACY_RATIO * diam ** mesh.dim:
            report.add("degenerate", ci)
            continue
        if mesh.apex is not None and int(mesh.apex[ci]) not in cell:
            report.add("apex", ci)
        good_cells.append(ci)
    for v in np.flatnonzero(~used):
        report.add("dangling", int(v))

    lo = np.array([pts[c].min(axis=0) for c in mesh.cells])
    hi = np.array([pts[c].max(axis=0) for c in mesh.cells])
    for i, j in itertools.combinations(good_cells, 2):
        report.checked += 1
        if np.any(lo[i] > hi[j] + 1e-12) or np.any(lo[j] > hi[i] + 1e-12):
            continue
        shared = sorted(set(mesh.cells[i].tolist()) & set(mesh.cells[j].tolist()))
        if len(shared) == mesh.dim + 1:
            report.add("duplicate", (i, j))
            continue
        inter = simplex_intersection_points(pts[mesh.cells[i]], pts[mesh.cells[j]])
        if not _within_face(inter, pts[shared] if shared else np.empty((0, mesh.dim))):
            report.add("overlap", (i, j))
    return report


def _within_face(points: np.ndarray, face: np.ndarray, tol: float = 1e-9) -> bool:
    """True when every point lies in the convex hull of ``face`` (0-2 points)."""
    if points.shape[0] == 0:
        return True
    if face.shape[0] == 0:
        return False
    if face.shape[0] == 1:
        return bool(np.all(np.linalg.norm(points - face[0], axis=1) <= tol))
    a, b = face[0], face[1]
    ab = b - a
    t = (points - a) @ ab / (ab @ ab)
    off = points - (a + t[:, None] * ab)
    return bool(np.all((t >= -tol) & (t <= 1 + tol)) and np.all(np.linalg.norm(off, axis=1) <= tol))

"""The advancing front: a piecewise-linear time function over a triangulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import DegenerateSimplex, InvalidArgument
from .mesh_core import SpaceMesh


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Leaf cells over a shared vertex table.

    ``points`` may contain vertices that no longer belong to any cell (for
    example after coarsening); such vertices are not part of the front.
    For triangles, column 0 of ``cells`` is the apex.
    """

    points: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        cells = np.asarray(self.cells, dtype=np.int64)
        object.__setattr__(self, "cells", cells.reshape(-1, pts.shape[1] + 1))

    @classmethod
    def from_mesh(cls, mesh: SpaceMesh) -> "Triangulation":
        cells = mesh.cells.copy()
        if mesh.dim == 2:
            for i, cell in enumerate(cells):
                a = int(mesh.apex[i])
                others = [int(v) for v in cell if v != a]
                cells[i] = [a, *others]
        return cls(mesh.points, cells)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def star(self) -> dict:
        """Map from vertex id to the indices of cells containing it."""
        out: dict = {}
        for ci, cell in enumerate(self.cells):
            for v in cell:
                out.setdefault(int(v), []).append(ci)
        return out

    @cached_property
    def neighbors(self) -> dict:
        out: dict = {v: set() for v in self.star}
        for cell in self.cells:
            for u in cell:
                for v in cell:
                    if u != v:
                        out[int(u)].add(int(v))
        return out

    @cached_property
    def vertices(self) -> np.ndarray:
        """Sorted ids of the vertices that belong to at least one cell."""
        return np.array(sorted(self.star), dtype=np.int64)

    @cached_property
    def edges(self) -> dict:
        """Map from sorted vertex pair to incident cell indices (2D only)."""
        out: dict = {}
        for ci, cell in enumerate(self.cells):
            a, b, c = (int(v) for v in cell)
            for e in ((a, b), (b, c), (a, c)):
                out.setdefault(tuple(sorted(e)), []).append(ci)
        return out

    def width(self, p: int) -> float:
        """Distance from ``p`` to the nearest affine hull of its link facets."""
        from .mesh_core import width_at_vertex

        return width_at_vertex(self.points, self.cells[self.star.get(p, [])], p)

    def max_star_size(self) -> int:
        return max(len(s) for s in self.star.values())


@dataclass(frozen=True, eq=False)
class Front:
    """A time value per vertex over a triangulation.

    Fronts are values: operations return new fronts that share the
    triangulation and copy only the time array.
    """

    tri: Triangulation
    times: np.ndarray
    targets: np.ndarray | None = field(default=None)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.shape[0] != self.tri.points.shape[0]:
            raise InvalidArgument("one time value per vertex is required")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def flat(cls, mesh: SpaceMesh, t: float = 0.0) -> "Front":
        return cls(Triangulation.from_mesh(mesh), np.full(mesh.n_vertices, float(t)))

    @property
    def points(self) -> np.ndarray:
        return self.tri.points

    def tau(self, p: int) -> float:
        return float(self.times[p])

    def lifted(self, cell) -> np.ndarray:
        """Spacetime coordinates of the vertices of ``cell``."""
        idx = np.asarray(cell, dtype=np.int64)
        return np.hstack([self.tri.points[idx], self.times[idx][:, None]])


def simplex_gradient(coords, times) -> np.ndarray:
    """Gradient of the linear interpolant of ``times`` over a space simplex."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    times = np.asarray(times, dtype=float)
    mat = coords[1:] - coords[0]
    rhs = times[1:] - times[0]
    diffs = coords[:, None, :] - coords[None, :, :]
    diam = math.sqrt(float((diffs * diffs).sum(axis=2).max()))
    det = abs(float(np.linalg.det(mat)))
    if diam == 0.0 or det < 1e-12 * diam ** mat.shape[0]:
        raise DegenerateSimplex(f"degenerate simplex {coords.tolist()}")
    return np.linalg.solve(mat, rhs)


def gradient_mag(front: Front, simplex) -> float:
    """Magnitude of the gradient of the front restricted to ``simplex``."""
    idx = np.asarray(simplex, dtype=np.int64)
    return float(np.linalg.norm(simplex_gradient(front.tri.points[idx], front.times[idx])))


def local_minima(front: Front) -> list[int]:
    """Vertices whose time is no larger than that of any neighbour."""
    times = front.times
    return [
        int(p)
        for p in front.tri.vertices
        if all(times[p] <= times[q] for q in front.tri.neighbors[int(p)])
    ]


def advance_vertex(front: Front, p: int, dt: float) -> Front:
    """Return ``next(front, p, dt)``: the front with vertex ``p`` raised by ``dt``."""
    if not dt >= 0.0:
        raise InvalidArgument(f"cannot advance by negative or NaN amount {dt}")
    times = front.times.copy()
    times[p] += dt
    return replace(front, times=times)


def with_time(front: Front, p: int, t: float) -> Front:
    """Return the front with ``τ(p)`` set to ``t`` (``t`` must not be lower)."""
    return advance_vertex(front, p, t - front.tau(p))


def facet_slope(front: Front, cell, field) -> float:
    """Conservative minimum slope of ``field`` over the lifted facet ``cell``."""
    idx = np.asarray(cell, dtype=np.int64)
    return field.facet_min(front.tri.points[idx], front.times[idx])


def causality_violations(front: Front, field) -> list[int]:
    """Indices of cells whose gradient is not strictly below the local slope."""
    bad = []
    for ci, cell in enumerate(front.tri.cells):
        if gradient_mag(front, cell) >= facet_slope(front, cell, field):
            bad.append(ci)
    return bad


def is_causal(front: Front, field) -> bool:
    """True when every facet's gradient is strictly below the field slope on it."""
    return not causality_violations(front, field)


def time_spread_ok(front: Front, diameter: float, max_slope: float) -> bool:
    """Check the spread bound ``max τ - min τ <= diam * maxS`` of causal fronts."""
    live = front.times[front.tri.vertices]
    return float(live.max() - live.min()) <= diameter * max_slope * (1 + 1e-12) + 1e-12


def min_time(front: Front) -> float:
    return float(front.times[front.tri.vertices].min()) if len(front.tri.vertices) else math.inf

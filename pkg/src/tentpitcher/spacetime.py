"""Spacetime elements, patches and the accumulated spacetime mesh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh_core import simplex_measure

INFLOW = "inflow"
OUTFLOW = "outflow"
IMPLICIT = "implicit"


@dataclass(frozen=True, eq=False)
class Element:
    """A spacetime simplex.

    ``keys`` identifies each corner as ``(space vertex id, time)`` and
    ``coords`` holds the matching spacetime coordinates (time last).
    ``labels[i]`` classifies the facet opposite corner ``i``.
    """

    keys: tuple
    coords: np.ndarray
    labels: tuple
    step: int = 0
    patch: int = 0

    @property
    def volume(self) -> float:
        return simplex_measure(self.coords)

    def facet(self, i: int) -> np.ndarray:
        return np.delete(self.coords, i, axis=0)


@dataclass(frozen=True, eq=False)
class Patch:
    """Elements created by one step.

    ``tentpole`` is ``(vertex, t_bottom, t_top)`` for a pitch and ``None``
    for a patch created by an edge flip.
    """

    elements: tuple
    tentpole: tuple | None = None

    @property
    def height(self) -> float:
        if self.tentpole is None:
            return 0.0
        return self.tentpole[2] - self.tentpole[1]


@dataclass
class SpacetimeMesh:
    """All accepted elements in creation order."""

    dim: int
    elements: list = field(default_factory=list)
    patches: int = 0

    def add_patch(self, patch: Patch, step: int) -> int:
        pid = self.patches
        self.patches += 1
        for el in patch.elements:
            self.elements.append(
                Element(el.keys, el.coords, el.labels, step=step, patch=pid)
            )
        return pid

    def __len__(self) -> int:
        return len(self.elements)

    def vertex_table(self):
        """Deduplicated spacetime vertices and per-element corner indices."""
        index: dict = {}
        coords = []
        conn = []
        for el in self.elements:
            row = []
            for key, xyz in zip(el.keys, el.coords):
                if key not in index:
                    index[key] = len(coords)
                    coords.append(xyz)
                row.append(index[key])
            conn.append(row)
        pts = np.array(coords) if coords else np.empty((0, self.dim + 1))
        return pts, conn


def make_element(front_points, keys, labels) -> Element:
    """Build an element from ``(space id, time)`` corner keys."""
    coords = np.array([[*front_points[v], t] for v, t in keys], dtype=float)
    return Element(tuple(keys), coords, tuple(labels))

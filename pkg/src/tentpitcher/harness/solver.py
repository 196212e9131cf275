"""A stand-in for the spacetime solver: a deterministic error indicator.

The "error" of an element is its spatial diameter divided by the target
length scale found on its inflow facet.  Large errors reject the patch and
name the inflow facets to refine; small errors mark outflow facets as
coarsenable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..spacetime import INFLOW, OUTFLOW


@dataclass(frozen=True)
class Accept:
    """The patch is kept; ``coarsenable`` lists outflow facets as space vertex tuples."""

    coarsenable: tuple = ()

    @property
    def accepted(self) -> bool:
        return True


@dataclass(frozen=True)
class Reject:
    """The patch is discarded; ``refine`` lists inflow facets to bisect."""

    refine: tuple = ()

    @property
    def accepted(self) -> bool:
        return False


def _facet_ids(element, label) -> tuple:
    i = element.labels.index(label)
    return tuple(v for k, (v, _) in enumerate(element.keys) if k != i)


def spatial_diameter(element) -> float:
    x = element.coords[:, :-1]
    return max(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(x, 2))


@dataclass
class MockSolver:
    """Error indicator ``diameter / local target scale`` with two thresholds.

    ``scale`` is a field of target length scales (same format as the
    wavespeed field).  Elements with error above ``xi1`` reject the patch;
    below ``xi2`` their outflow facet becomes coarsenable.
    """

    scale: object
    xi1: float = 1.0
    xi2: float = 0.25

    def __post_init__(self):
        if not 0 < self.xi2 < self.xi1:
            raise InvalidArgument(f"thresholds must satisfy 0 < xi2 < xi1, got {self.xi2}, {self.xi1}")

    def error(self, element) -> float:
        i = element.labels.index(INFLOW)
        facet = np.delete(element.coords, i, axis=0)
        local = self.scale.facet_min(facet[:, :-1], facet[:, -1])
        return spatial_diameter(element) / local

    def evaluate(self, patch):
        errors = [self.error(el) for el in patch.elements]
        bad = [el for el, e in zip(patch.elements, errors) if e > self.xi1]
        if bad:
            return Reject(tuple(_facet_ids(el, INFLOW) for el in bad))
        return Accept(tuple(_facet_ids(el, OUTFLOW) for el, e in zip(patch.elements, errors)
                            if e < self.xi2))


def solver_evaluate(solver, patch):
    return solver.evaluate(patch)


__all__ = ["Accept", "MockSolver", "Reject", "solver_evaluate", "spatial_diameter"]

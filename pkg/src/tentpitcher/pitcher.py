"""Advancing-front drivers, tent triangulation and spacetime mesh checks.

A run repeatedly selects a local minimum of the front, lifts it as high as
the active constraints allow, triangulates the tent between the old and the
new front into a patch and (optionally) hands the patch to a solver that
may reject it and ask for refinement.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .adapt import RefForest
from .cones.lookahead import (
    REFINE,
    is_hl_progressive,
    mach_refine_decision,
    maximize_progress,
)
from .cones.remote import RemoteCone, facet_entry, walk_remote
from .constraints import (
    ConstraintParams,
    HeightBound,
    adaptive_sup_2d,
    causal_sup_1d,
    causal_sup_2d,
    min_tentpole_guarantee,
    progress_sup_2d,
    satisfies_adaptive,
    satisfies_progress,
)
from .errors import (
    BudgetExceeded,
    CausalityAlreadyViolated,
    CoarsenRejected,
    DegenerateSimplex,
    EstimateNotConverged,
    FrontConformed,
    InvalidArgument,
    StuckFront,
)
from .front import Front, Triangulation, gradient_mag, local_minima
from .mesh_core import SpaceMesh, ValidationReport
from .spacetime import IMPLICIT, INFLOW, OUTFLOW, Patch, SpacetimeMesh, make_element

log = logging.getLogger(__name__)

MODES = ("linear", "nonlocal", "adaptive", "unified", "conform")
HEURISTICS = ("global-min", "random-local-min", "max-guarantee")
REMOTE_METHODS = ("exact", "hierarchy", "binary")


@dataclass(frozen=True)
class PitchPolicy:
    """Everything a driver needs to decide heights, besides the field.

    ``remote`` picks how nonlocal cones are queried: a linear scan
    (``exact``), a maintained cone hierarchy (``hierarchy``) or bisection on
    the tentpole (``binary``).  ``lazy`` selects lazy refinement
    propagation and ``max_level`` caps the refinement depth.
    """

    mode: str = "linear"
    heuristic: str = "global-min"
    params: ConstraintParams = field(default_factory=ConstraintParams)
    horizon: int = 1
    lookahead: int = 1
    target: float = 1.0
    budget: int = 10**6
    seed: int = 0
    lazy: bool = True
    remote: str = "exact"
    max_level: int = 12
    binary_tol: float = 1e-9
    conform_rule: str = "gamma"
    smoothing: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.heuristic not in HEURISTICS:
            raise InvalidArgument(f"unknown heuristic {self.heuristic!r}")
        if self.remote not in REMOTE_METHODS:
            raise InvalidArgument(f"unknown remote query method {self.remote!r}")
        if self.horizon < 0 or self.lookahead < 0:
            raise InvalidArgument("horizon and lookahead must be non-negative")
        if not math.isfinite(self.target):
            raise InvalidArgument("target time must be finite")
        if self.budget <= 0:
            raise InvalidArgument("step budget must be positive")
        if self.conform_rule not in ("gamma", "heuristic"):
            raise InvalidArgument(f"unknown target-time rule {self.conform_rule!r}")


# ---------------------------------------------------------------- selection


def select_vertex(front: Front, policy: PitchPolicy, targets=None, rng=None, field=None) -> int:
    """Pick the next vertex to pitch.

    Eligible vertices are local minima strictly below their target time
    (``targets[p]`` when given, else ``policy.target``).  ``global-min``
    takes the lowest one with ties broken by id; ``random-local-min`` draws
    uniformly; ``max-guarantee`` prefers the largest worst-case height.

    Raises:
        FrontConformed: when no vertex is eligible.
    """
    def target(p):
        return policy.target if targets is None else targets[p]

    cands = [p for p in local_minima(front) if front.tau(p) < target(p)]
    if not cands:
        raise FrontConformed("every local minimum has reached its target time")
    if policy.heuristic == "global-min":
        return min(cands, key=lambda p: (front.tau(p), p))
    if policy.heuristic == "random-local-min":
        rng = rng if rng is not None else np.random.default_rng(policy.seed)
        return int(cands[int(rng.integers(len(cands)))])
    slope = field.min_slope if field is not None else 1.0
    return min(cands, key=lambda p: (-guarantee_at(front, p, policy.params, slope), front.tau(p), p))


def guarantee_at(front: Front, p: int, params: ConstraintParams, min_slope: float) -> float:
    """Worst-case tentpole height ``min{ε,1-ε}·w_p·minS`` at ``p``."""
    return min_tentpole_guarantee(params.epsilon, min_slope, front.tri.width(p))


# ------------------------------------------------------------------ tents


def triangulate_tent(front: Front, p: int, t_new: float) -> Patch:
    """Split the tent over the star of ``p`` into one simplex per star cell.

    Corners are ``(p, τ(p))``, ``(p, t_new)`` and the link vertices; the
    facet opposite the bottom of the tentpole is the new (outflow) facet,
    the one opposite the top is the old (inflow) facet and the two facets
    containing the tentpole are implicit.
    """
    t_old = front.tau(p)
    elements = []
    for ci in front.tri.star[p]:
        others = [int(v) for v in front.tri.cells[ci] if v != p]
        keys = [(p, t_old), (p, float(t_new))] + [(v, front.tau(v)) for v in others]
        labels = (OUTFLOW, INFLOW) + (IMPLICIT,) * len(others)
        elements.append(make_element(front.points, keys, labels))
    return Patch(tuple(elements), (p, t_old, float(t_new)))


def _face_candidates(x: np.ndarray) -> np.ndarray:
    """Spatial points where the vertical chord of a simplex can peak."""
    pts = [row for row in x]
    if x.shape[1] == 2:
        edges = list(itertools.combinations(range(x.shape[0]), 2))
        for (a, b), (c, e) in itertools.combinations(edges, 2):
            if {a, b} & {c, e}:
                continue
            mat = np.column_stack([x[b] - x[a], x[c] - x[e]])
            if abs(np.linalg.det(mat)) < 1e-14:
                continue
            s, u = np.linalg.solve(mat, x[c] - x[a])
            if -1e-12 <= s <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
                pts.append(x[a] + s * (x[b] - x[a]))
    return np.array(pts)


def temporal_aspect_ratio(element) -> float:
    """Longest vertical segment inside the simplex divided by its duration.

    The chord length is concave over the projection, so it peaks at a
    projected vertex or where two projected edges cross; every face is
    evaluated at those points.

    Raises:
        DegenerateSimplex: when the simplex has zero duration.
    """
    coords = np.asarray(getattr(element, "coords", element), dtype=float)
    x, t = coords[:, :-1], coords[:, -1]
    duration = float(t.max() - t.min())
    scale = max(1.0, float(np.abs(t).max()))
    if duration <= 1e-15 * scale:
        raise DegenerateSimplex("element has zero duration")
    d = x.shape[1]
    cands = _face_candidates(x)
    lo = np.full(len(cands), math.inf)
    hi = np.full(len(cands), -math.inf)
    span = float(np.ptp(x, axis=0).max())
    for face in itertools.combinations(range(len(coords)), d + 1):
        face = list(face)
        mat = (x[face[1:]] - x[face[0]]).T
        if abs(float(np.linalg.det(mat))) <= 1e-12 * span ** d:
            continue
        rest = np.linalg.solve(mat, (cands - x[face[0]]).T).T
        lam = np.hstack([1.0 - rest.sum(axis=1, keepdims=True), rest])
        inside = lam.min(axis=1) >= -1e-9
        tv = lam @ t[face]
        hi = np.where(inside, np.maximum(hi, tv), hi)
        lo = np.where(inside, np.minimum(lo, tv), lo)
    ok = np.isfinite(lo) & np.isfinite(hi)
    chord = float((hi[ok] - lo[ok]).max()) if ok.any() else 0.0
    return chord / duration


# ----------------------------------------------------------- weak complex


def _barycentric_rows(coords: np.ndarray) -> np.ndarray:
    """Affine maps of the barycentric coordinates, scaled to distances.

    Row ``i`` gives ``λ_i(x) / |∇λ_i| = R[i, :D] @ x + R[i, D]``.
    """
    D = coords.shape[1]
    mat = np.vstack([coords.T, np.ones(D + 1)])
    inv = np.linalg.inv(mat)
    norms = np.linalg.norm(inv[:, :D], axis=1)
    return inv / norms[:, None]


def _candidate_pairs(lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    order = np.argsort(lo[:, 0], kind="stable")
    slo, shi = lo[order], hi[order]
    pairs = []
    for k in range(len(order)):
        end = int(np.searchsorted(slo[:, 0], shi[k, 0] + tol, side="right"))
        if end <= k + 1:
            continue
        js = np.arange(k + 1, end)
        keep = np.all(slo[js] <= shi[k] + tol, axis=1) & np.all(slo[k] <= shi[js] + tol, axis=1)
        a, b = np.full(int(keep.sum()), order[k]), order[js[keep]]
        pairs.append(np.column_stack([np.minimum(a, b), np.maximum(a, b)]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    out = np.concatenate(pairs).astype(np.int64)
    return out[np.lexsort((out[:, 1], out[:, 0]))]


def _separated_by_facet(coords, rows, homog, pairs, eps) -> np.ndarray:
    """Pairs that pass without enumeration.

    When every corner of ``B`` lies on or beyond the plane of a facet of
    ``A``, the intersection is the face of ``B`` spanned by its corners on
    that plane, provided those corners are corners of ``A``; symmetrically
    with the roles swapped.
    """
    out = np.zeros(len(pairs), dtype=bool)
    for first, second in ((0, 1), (1, 0)):
        a, b = pairs[:, first], pairs[:, second]
        side = np.einsum("pkd,pjd->pkj", rows[a], homog[b])
        beyond = (side <= eps).all(axis=2)
        on_plane = np.abs(side) <= eps
        dist = np.linalg.norm(coords[b][:, :, None, :] - coords[a][:, None, :, :], axis=-1)
        shared = (dist <= eps).any(axis=2)
        ok = beyond & (~on_plane | shared[:, None, :]).all(axis=2)
        out |= ok.any(axis=1)
    return out


def verify_weak_complex(mesh, tol: float = 1e-9, chunk: int = 2048) -> ValidationReport:
    """Check that every pairwise intersection is a face of one of the two.

    For each candidate pair the vertices of the intersection polytope are
    enumerated (every vertex is tight on ``D`` of the ``2(D+1)`` facet
    inequalities).  The smallest face of ``A`` holding the intersection is
    spanned by the corners of ``A`` with positive weight at some
    intersection vertex; the intersection is that face exactly when all of
    its corners also lie in ``B``.  Pairs that fail both ways are reported
    as ``overlap`` when the intersection has interior, else ``improper``.
    ``mesh`` is a :class:`SpacetimeMesh` or a sequence of coordinate arrays.
    """
    elems = [np.asarray(getattr(e, "coords", e), dtype=float) for e in getattr(mesh, "elements", mesh)]
    report = ValidationReport()
    if len(elems) < 2:
        return report
    coords = np.stack(elems)
    n, k, D = coords.shape
    scale = max(1.0, float(np.abs(coords).max()))
    eps = tol * scale
    rows = np.stack([_barycentric_rows(c) for c in coords])
    pairs = _candidate_pairs(coords.min(axis=1), coords.max(axis=1), eps)
    report.checked = len(pairs)
    combos = np.array(list(itertools.combinations(range(2 * k), D)))
    homog_corners = np.concatenate([coords, np.ones((n, k, 1))], axis=2)
    pairs = pairs[~_separated_by_facet(coords, rows, homog_corners, pairs, eps)]
    for start in range(0, len(pairs), chunk):
        block = pairs[start:start + chunk]
        ra, rb = rows[block[:, 0]], rows[block[:, 1]]
        both = np.concatenate([ra, rb], axis=1)
        mats = both[:, combos, :D]
        rhs = -both[:, combos, D]
        # Rows are unit normals, so |det| bounds the conditioning; nearly
        # parallel planes give vertices too noisy to classify.
        good = np.abs(np.linalg.det(mats)) > 1e-6
        safe = np.where(good[..., None, None], mats, np.eye(D))
        pts = np.linalg.solve(safe, rhs[..., None])[..., 0]
        homog = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)
        lam_a = np.einsum("pkd,pcd->pck", ra, homog)
        lam_b = np.einsum("pkd,pcd->pck", rb, homog)
        feas = good & (lam_a.min(axis=-1) >= -eps) & (lam_b.min(axis=-1) >= -eps)
        # Corners of A spanning the smallest face that holds the intersection.
        sup_a = ((lam_a > eps) & feas[..., None]).any(axis=1)
        sup_b = ((lam_b > eps) & feas[..., None]).any(axis=1)
        a_in_b = (np.einsum("pkd,pjd->pjk", rb, homog_corners[block[:, 0]]) >= -eps).all(axis=-1)
        b_in_a = (np.einsum("pkd,pjd->pjk", ra, homog_corners[block[:, 1]]) >= -eps).all(axis=-1)
        face_a = (~sup_a | a_in_b).all(axis=1)
        face_b = (~sup_b | b_in_a).all(axis=1)
        for idx in np.flatnonzero(feas.any(axis=1) & ~face_a & ~face_b):
            f = feas[idx]
            centre = np.append(pts[idx][f].mean(axis=0), 1.0)
            inner = (ra[idx] @ centre).min() > eps and (rb[idx] @ centre).min() > eps
            report.add("overlap" if inner else "improper", (int(block[idx, 0]), int(block[idx, 1])))
    return report


# ------------------------------------------------------------ size bounds


def count_bound(n: int, target: float, diameter: float, slope: float, epsilon: float,
                w_min: float, max_star: int) -> int:
    """``⌈n(T + diam·S) / (min{ε,1-ε}·S·w_min)⌉·Δ`` as an exact integer."""
    pitches = n * (target + diameter * slope) / (min(epsilon, 1 - epsilon) * slope * w_min)
    return math.ceil(pitches - 1e-12 * pitches) * max_star


def mesh_count_bound(mesh: SpaceMesh, target: float, slope: float, epsilon: float) -> int:
    tri = Triangulation.from_mesh(mesh)
    w_min = min(tri.width(int(p)) for p in tri.vertices)
    return count_bound(len(tri.vertices), target, mesh.diameter, slope, epsilon, w_min,
                       tri.max_star_size())


# ----------------------------------------------------------------- report


@dataclass
class RunReport:
    """Aggregates of a run; :meth:`from_events` recomputes them from the log."""

    elements: int = 0
    patches: int = 0
    pitches: int = 0
    steps: int = 0
    min_aspect: float = math.inf
    mean_aspect: float = math.nan
    min_tentpole: float = math.inf
    min_tentpole_ratio: float = math.inf
    count_bound: int | None = None
    verification: dict = field(default_factory=dict)
    wall_time: float = 0.0
    stats: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    @classmethod
    def from_events(cls, events, elements=()) -> "RunReport":
        out = cls(events=list(events))
        pitches = [e for e in events if e["op"] == "pitch"]
        out.pitches = len(pitches)
        out.patches = len({e["patch"] for e in events if e.get("patch") is not None})
        out.steps = max((e["step"] for e in events), default=-1) + 1
        for e in pitches:
            height = e["t_new"] - e["t_old"]
            out.min_tentpole = min(out.min_tentpole, height)
            if e.get("guarantee"):
                out.min_tentpole_ratio = min(out.min_tentpole_ratio, height / e["guarantee"])
        ratios = [temporal_aspect_ratio(el) for el in elements]
        out.elements = len(ratios)
        if ratios:
            out.min_aspect = min(ratios)
            out.mean_aspect = float(np.mean(ratios))
        return out


# ----------------------------------------------------------------- driver


class Pitcher:
    """Stateful driver for one run.

    1D runs use a fixed triangulation; 2D runs keep a refinement forest so
    that the adaptive modes can refine and coarsen.  ``times`` gives the
    initial front (flat at 0 by default).
    """

    def __init__(self, mesh: SpaceMesh, policy: PitchPolicy, field, solver=None, times=None,
                 forest: RefForest | None = None):
        self.mesh = mesh
        self.policy = policy
        self.field = field
        self.solver = solver
        self.params = policy.params
        self.dim = mesh.dim
        self.rng = np.random.default_rng(policy.seed)
        if forest is not None:
            self.forest = forest
            self.tri = None
            self.times = None
        elif self.dim == 2:
            self.forest = RefForest.from_mesh(mesh, times)
            self.tri = None
            self.times = None
        else:
            self.forest = None
            self.tri = Triangulation.from_mesh(mesh)
            self.times = np.zeros(mesh.n_vertices) if times is None else np.asarray(times, dtype=float).copy()
        self.spacetime = SpacetimeMesh(self.dim)
        self.events: list = []
        self.stats: Counter = Counter()
        self.steps = 0
        self._hier = None
        self._hier_tri = None
        self._promised = False

    # ----------------------------------------------------------- state

    def front(self) -> Front:
        if self.forest is not None:
            return self.forest.front()
        return Front(self.tri, self.times.copy())

    def _set_time(self, p: int, t: float) -> None:
        if self.forest is not None:
            self.forest.times[p] = float(t)
        else:
            self.times[p] = float(t)

    def target_of(self, p: int) -> float:
        return self.policy.target

    def targets(self, front: Front):
        return None

    def _event(self, op, vertex=None, t_old=None, t_new=None, binding="", patch=None, **extra):
        rec = {"step": self.steps, "op": op, "vertex": vertex, "t_old": t_old, "t_new": t_new,
               "binding": binding, "patch": patch}
        rec.update(extra)
        self.events.append(rec)
        return rec

    # --------------------------------------------------------- bounds

    def _cell_slope(self, front: Front, cell) -> float:
        idx = np.asarray(cell, dtype=np.int64)
        return self.field.future_min(front.points[idx], front.times[idx])

    def _local_sup(self, front: Front, p: int, cap: float = math.inf) -> HeightBound:
        """Causality at the future slope of each star cell plus progress at ``minS``."""
        min_s = self.field.min_slope
        cells = [front.tri.cells[ci] for ci in front.tri.star[p]]
        if self.dim == 1:
            slopes = {}
            for cell in cells:
                q = int(cell[0] if cell[1] == p else cell[1])
                slopes[(p, q)] = min(self._cell_slope(front, cell), cap)
            return causal_sup_1d(front, p, slopes)
        eps, phi_bar = self.params.epsilon, self.params.phi_bar
        best = HeightBound(math.inf)
        adaptive = self.policy.mode in ("adaptive", "unified") or self.solver is not None
        for cell in cells:
            s_t = min(self._cell_slope(front, cell), cap)
            bounds = [causal_sup_2d(front, p, cell, s_t)]
            if adaptive and satisfies_adaptive(front, cell, min_s, eps, phi_bar):
                bounds.append(adaptive_sup_2d(front, p, cell, min_s, eps, phi_bar))
            elif satisfies_progress(front, cell, min_s, eps, all_edges=True):
                bounds.append(progress_sup_2d(front, p, cell, min_s, eps))
            else:
                self.stats["progress_fallback"] += 1
            best = min([best] + bounds)
        return best

    def _remote_cones(self, front: Front):
        tri = front.tri
        cones = []
        for cell in tri.cells:
            idx = np.asarray(cell, dtype=np.int64)
            cones.append(RemoteCone(tri.points[idx], front.times[idx],
                                    self.field.facet_min(tri.points[idx], front.times[idx])))
        return cones

    def _hierarchy(self, front: Front):
        from .cones.hierarchy import ConeHierarchy

        if self._hier is None or self._hier_tri is not front.tri:
            self._hier = ConeHierarchy(self._remote_cones(front), front.tri.star)
            self._hier_tri = front.tri
            self.stats["hierarchy_builds"] += 1
        return self._hier

    def _refresh_hierarchy(self, front: Front, p: int) -> None:
        if self._hier is None or self._hier_tri is not front.tri:
            return
        tri = front.tri
        for ci in tri.star[p]:
            idx = tri.cells[ci]
            self._hier.update(ci, RemoteCone(tri.points[idx], front.times[idx],
                                             self.field.facet_min(tri.points[idx], front.times[idx])))

    def _nonlocal_sup(self, front: Front, p: int, start: HeightBound) -> HeightBound:
        star = set(front.tri.star[p])
        cells = [front.tri.cells[ci] for ci in star]
        cap0 = max(self._cell_slope(front, c) for c in cells)
        y = front.points[p]

        def local(cap):
            return self._local_sup(front, p, cap).sup_value

        if self.policy.remote == "binary":
            return self._binary_remote(front, p, start, cap0, local)
        if self.policy.remote == "hierarchy":
            hier = self._hierarchy(front)

            def entries(cap):
                return hier.iter_entries(y, cap, exclude=star)
        else:
            cones = self._remote_cones(front)

            def entries(cap):
                scan = []
                for key, cone in enumerate(cones):
                    if key in star:
                        continue
                    scan.append((facet_entry(cone.coords, cone.times, cone.slope, y), cone.slope, key))
                scan.sort()
                return iter(scan)

        value, key = walk_remote(local, cap0, entries)
        if key is None or value >= start.sup_value:
            return start
        self.stats["remote_binding"] += 1
        return HeightBound(value, "Remote", (int(key),))

    def _binary_remote(self, front, p, start, cap0, local) -> HeightBound:
        from .cones.remote import t_remote_binary_search

        hier = self._hierarchy(front)
        exclude = set(front.tri.star[p])
        x = front.points[p]
        t0 = front.tau(p)
        floor = t0 + guarantee_at(front, p, self.params, self.field.min_slope)
        lo, hi, cap = floor, start.sup_value, cap0
        binding = None
        for _ in range(64):
            if not lo < hi:
                break
            hit = t_remote_binary_search(front, p, lo, hi, self.policy.binary_tol,
                                         local_slope=cap, hierarchy=hier)
            if float(hit) >= hi:
                break
            seg = np.array([[*x, t0], [*x, float(hit)]])
            cap = min(cap, hier.min_slope_intersecting(seg, exclude=exclude))
            binding = "Remote"
            g = local(cap)
            if g <= hit:
                hi = max(floor, float(hit) - self.policy.binary_tol)
                break
            lo, hi = float(hit), g
        if binding is None or hi >= start.sup_value:
            return start
        self.stats["remote_binding"] += 1
        return HeightBound(hi, binding, ("binary",))

    def _unified_top(self, front: Front, p: int, floor: float) -> tuple:
        """Lowest per-triangle lookahead height, then backed off until (h,l)-progressive."""
        h, levels = self.policy.horizon, self.policy.lookahead
        best = math.inf
        for ci in front.tri.star[p]:
            verts = [int(v) for v in front.tri.cells[ci]]
            coords, times = front.points[verts], front.times[verts]
            try:
                t = maximize_progress(coords, times, verts.index(p), h, self.field, self.params,
                                      adaptive=True)
            except EstimateNotConverged as exc:
                self.stats["estimate_not_converged"] += 1
                t = exc.last_value
            except CausalityAlreadyViolated:
                self.stats["lookahead_fallback"] += 1
                t = floor
            best = min(best, t)
        top = max(best, floor)

        def ok(t):
            for ci in front.tri.star[p]:
                verts = [int(v) for v in front.tri.cells[ci]]
                times = front.times[verts].copy()
                times[verts.index(p)] = t
                if not is_hl_progressive(front.points[verts], times, h, levels, self.field, self.params):
                    return False
            return True

        tries = 0
        while top > floor and not ok(top) and tries < 40:
            top = floor + 0.5 * (top - floor)
            tries += 1
        if tries:
            self.stats["hl_backoff"] += 1
        return top, "Lookahead"

    def height_bound(self, front: Front, p: int) -> tuple:
        """Feasible new time of ``p`` under the policy, with the binding constraint name.

        Returns ``(t_new, binding, guarantee)``.
        """
        guarantee = guarantee_at(front, p, self.params, self.field.min_slope)
        tau = front.tau(p)
        if self.policy.mode == "unified" and self.dim == 2:
            top, binding = self._unified_top(front, p, tau + guarantee)
            local = self._local_sup(front, p)
            if top >= local.sup_value:
                top = local.feasible(tau, self.params.delta)
                binding = str(local)
            return top, binding, guarantee
        fallbacks = self.stats["progress_fallback"]
        bound = self._local_sup(front, p)
        if self.policy.mode in ("nonlocal", "unified"):
            bound = self._nonlocal_sup(front, p, bound)
        t_new = bound.feasible(tau, self.params.delta)
        self._promised = (self.policy.mode not in ("adaptive", "unified") and self.solver is None
                          and self.stats["progress_fallback"] == fallbacks)
        if self._promised:
            # The guaranteed height itself is feasible on a progressive front,
            # so the back-off from a supremum never drops below it.
            t_new = max(t_new, tau + guarantee)
        return t_new, str(bound), guarantee

    def choose_top(self, front: Front, p: int, t_feasible: float, guarantee: float) -> tuple:
        """Hook for target-time handling; returns ``(t_new, note)``."""
        return t_feasible, ""

    def tentpole_floor(self, front: Front, p: int, guarantee: float):
        """Height this pitch promises, logged for verification; None when none is promised."""
        if self.policy.mode in ("linear", "nonlocal") and self._promised and guarantee:
            return guarantee
        return None

    # ----------------------------------------------------------- steps

    def _mach_refine(self, p: int) -> int:
        count = 0
        for _ in range(10_000):
            todo = None
            for leaf in self.forest.incident_leaves(p):
                if leaf.level >= self.policy.max_level:
                    continue
                coords = np.array([self.forest.points[v] for v in leaf.verts])
                times = np.array([self.forest.times[v] for v in leaf.verts])
                if mach_refine_decision(coords, times, self.field) == REFINE:
                    todo = leaf
                    break
            if todo is None:
                break
            self._refine_leaf(todo, "Mach")
            self.forest.cleanup_before_pitching(p)
            count += 1
        return count

    def _refine_leaf(self, leaf, reason: str) -> int:
        before = len(self.forest.points)
        if self.policy.lazy:
            records = self.forest.refine_lazy(leaf)
        else:
            records = self.forest.refine_earnest(leaf)
        for rec in records:
            m = rec.midpoint
            self._event("refine", m, None, self.forest.times[m], reason)
            self.on_new_vertex(m)
        self.stats["refinements"] += len(records)
        return len(self.forest.points) - before

    def on_new_vertex(self, v: int) -> None:
        """Hook called for every vertex created by refinement."""

    def _leaf_for(self, verts):
        want = set(int(v) for v in verts)
        for leaf in self.forest.incident_leaves(int(verts[0])):
            if set(leaf.verts) == want:
                return leaf
        return None

    def _handle_reject(self, verdict) -> bool:
        """Refine the rejected inflow leaves; False when none can be refined."""
        if self.forest is None:
            return False
        done = 0
        for facet in verdict.refine:
            leaf = self._leaf_for(facet)
            if leaf is None or not leaf.alive or not leaf.is_leaf:
                continue
            if leaf.level >= self.policy.max_level:
                continue
            self._refine_leaf(leaf, "Reject")
            done += 1
        return done > 0

    def _merge_ok(self, parents) -> bool:
        """Merged parents must keep the progress constraint the pitcher relies on."""
        from .cones.lookahead import _front

        eps, phi_bar, min_s = self.params.epsilon, self.params.phi_bar, self.field.min_slope
        for node in parents:
            coords = np.array([self.forest.points[v] for v in node.verts])
            times = np.array([self.forest.times[v] for v in node.verts])
            if not satisfies_adaptive(_front(coords, times), (0, 1, 2), min_s, eps, phi_bar):
                return False
        return True

    def _mark_and_coarsen(self, verdict) -> int:
        if self.forest is None:
            return 0
        for facet in verdict.coarsenable:
            leaf = self._leaf_for(facet)
            if leaf is not None:
                leaf.coarsenable = True
        merged = 0
        for facet in verdict.coarsenable:
            leaf = self._leaf_for(facet)
            if leaf is None or leaf.parent is None or not leaf.alive:
                continue
            s = leaf.apex
            if not all(n.coarsenable for n in self.forest.incident_leaves(s)):
                continue
            try:
                parents = self.forest.derefine(leaf, accept=self._merge_ok)
            except CoarsenRejected as exc:
                self.stats[f"coarsen_rejected_{exc.reason}"] += 1
                continue
            merged += len(parents)
            self._event("coarsen", s, None, None, "Accept", None)
        self.stats["coarsenings"] += merged
        return merged

    def step(self) -> bool:
        """Select and pitch one vertex.  Returns False once the front is done."""
        while True:
            if self.steps >= self.policy.budget:
                raise BudgetExceeded(f"step budget {self.policy.budget} exhausted")
            front = self.front()
            try:
                p = select_vertex(front, self.policy, self.targets(front), self.rng, self.field)
            except FrontConformed:
                if self.on_idle(front):
                    continue
                return False
            if self.forest is not None:
                self.forest.cleanup_before_pitching(p)
                if self.policy.mode == "unified":
                    self._mach_refine(p)
                front = self.front()
            done = self.pitch_vertex(front, p)
            if self.forest is not None:
                self.stats["max_degree"] = max(self.stats["max_degree"], self.forest.max_degree())
            if done:
                return True

    def pitch_vertex(self, front: Front, p: int) -> bool:
        """Pitch ``p`` on ``front``; False when the solver forced a refinement."""
        tau = front.tau(p)
        t_feasible, binding, guarantee = self.height_bound(front, p)
        t_new, note = self.choose_top(front, p, t_feasible, guarantee)
        floor = self.tentpole_floor(front, p, guarantee)
        if not t_new > tau:
            raise StuckFront(f"vertex {p}: new time {t_new} is not above {tau}")
        patch = triangulate_tent(front, p, t_new)
        if self.solver is not None:
            verdict = self.solver.evaluate(patch)
            if not verdict.accepted:
                self.steps += 1
                if self._handle_reject(verdict):
                    self._event("reject", p, tau, t_new, binding)
                    return False
                self.stats["forced_accept"] += 1
        self._set_time(p, t_new)
        pid = self.spacetime.add_patch(patch, self.steps)
        new_front = self.front()
        bad = [ci for ci in new_front.tri.star[p]
               if gradient_mag(new_front, new_front.tri.cells[ci])
               >= self.field.facet_min(new_front.points[new_front.tri.cells[ci]],
                                       new_front.times[new_front.tri.cells[ci]])]
        if bad:
            self.stats["causality_violations"] += len(bad)
            log.error("step %d: %d non-causal facets around vertex %d", self.steps, len(bad), p)
        self._event("pitch", p, tau, t_new, binding + note, pid, guarantee=guarantee,
                    floor=floor, causal=not bad)
        self._refresh_hierarchy(new_front, p)
        self.stats["pitches"] += 1
        self.steps += 1
        self.after_commit(new_front, p)
        if self.solver is not None and verdict.accepted:
            self._mark_and_coarsen(verdict)
        return True

    def after_commit(self, front: Front, p: int) -> None:
        """Hook run after a pitch is committed."""

    def on_idle(self, front: Front) -> bool:
        """Hook run when no vertex is eligible; True asks for another selection."""
        return False

    def run(self) -> tuple:
        start = time.perf_counter()
        while self.step():
            pass
        report = RunReport.from_events(self.events, self.spacetime.elements)
        report.wall_time = time.perf_counter() - start
        report.stats = dict(self.stats)
        if self.field.is_constant:
            report.count_bound = mesh_count_bound(self.mesh, self.policy.target,
                                                  self.field.min_slope, self.params.epsilon)
        return self.spacetime, report


def pitch(front: Front, p: int, policy: PitchPolicy, field) -> tuple:
    """One pitch on a fixed triangulation: returns ``(new front, patch)``.

    Uses the linear or nonlocal height rule of ``policy`` (adaptive rules
    need a refinement forest and go through :class:`Pitcher`).
    """
    if front.tri.dim == 2:
        mesh = SpaceMesh(2, front.points, front.tri.cells, apex=front.tri.cells[:, 0])
    else:
        mesh = SpaceMesh(1, front.points, front.tri.cells)
    driver = Pitcher(mesh, policy, field, times=front.times)
    cur = driver.front()
    t_feasible, _, _ = driver.height_bound(cur, p)
    if not t_feasible > front.tau(p):
        raise StuckFront(f"vertex {p}: new time {t_feasible} is not above {front.tau(p)}")
    patch = triangulate_tent(front, p, t_feasible)
    times = front.times.copy()
    times[p] = t_feasible
    return Front(front.tri, times, front.targets), patch


def make_driver(mesh: SpaceMesh, policy: PitchPolicy, field, solver=None, times=None,
                forest=None) -> Pitcher:
    if policy.mode == "conform":
        from .conform import ConformingPitcher

        return ConformingPitcher(mesh, policy, field, solver, times, forest)
    return Pitcher(mesh, policy, field, solver, times, forest)


def run(mesh: SpaceMesh, policy: PitchPolicy, field, solver=None, times=None) -> tuple:
    """Mesh ``mesh × [0, T]`` and return ``(SpacetimeMesh, RunReport)``."""
    return make_driver(mesh, policy, field, solver, times).run()


__all__ = [
    "PitchPolicy",
    "Pitcher",
    "RunReport",
    "count_bound",
    "make_driver",
    "mesh_count_bound",
    "pitch",
    "run",
    "select_vertex",
    "temporal_aspect_ratio",
    "triangulate_tent",
    "verify_weak_complex",
]

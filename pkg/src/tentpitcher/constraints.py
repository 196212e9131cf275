"""Gradient constraints on the front and the tentpole height bounds they imply.

Triangles are vertex-id triples.  Where an apex matters, the first entry of
the triple is the apex, matching :class:`~tentpitcher.front.Triangulation`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityAlreadyViolated, InvalidArgument
from .front import Front
from .mesh_core import TriangleShape, distance_to_line, foot_of_perpendicular

#: Relative slack allowed when testing the non-strict progress inequalities.
BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class ConstraintParams:
    """Numerical parameters of the constraint family.

    ``phi_bar`` defaults to the middle of its legal band ``(ε, (1+ε)/2)``.
    """

    epsilon: float = 0.5
    phi_bar: float | None = None
    gamma: float = 0.5
    delta: float = 1e-9

    def __post_init__(self):
        eps = self.epsilon
        if self.phi_bar is None:
            object.__setattr__(self, "phi_bar", (1 + 3 * eps) / 4)
        if not 0.0 < eps < 1.0:
            raise InvalidArgument(f"epsilon must lie in (0, 1), got {eps}")
        if not eps < self.phi_bar < (1 + eps) / 2:
            raise InvalidArgument(
                f"phi_bar must lie in (epsilon, (1+epsilon)/2), got {self.phi_bar}"
            )
        if not 0.0 < self.gamma <= 0.5:
            raise InvalidArgument(f"gamma must lie in (0, 1/2], got {self.gamma}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidArgument(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def eps_hat(self) -> float:
        return min(self.epsilon, 1.0 - self.epsilon)


@dataclass(frozen=True, order=True)
class HeightBound:
    """Supremum of the legal new time of a vertex and the constraint that set it."""

    sup_value: float
    binding: str = field(default="Causality", compare=False)
    detail: tuple = field(default=(), compare=False)

    def __str__(self) -> str:
        if not self.detail:
            return self.binding
        return f"{self.binding}({','.join(str(d) for d in self.detail)})"

    def feasible(self, tau_p: float, delta: float) -> float:
        """Back off from the (strict, infeasible) supremum by a relative ``delta``."""
        if math.isinf(self.sup_value):
            return self.sup_value
        return tau_p + (1.0 - delta) * (self.sup_value - tau_p)


def _slope_for(slope, segment) -> float:
    if callable(slope):
        return float(slope(segment))
    if isinstance(slope, dict):
        return float(slope[segment])
    return float(slope)


def causal_sup_1d(front: Front, p: int, slope) -> HeightBound:
    """Causality limit on ``τ'(p)`` from every segment incident on ``p``.

    ``slope`` is a number, a mapping from ``(p, q)`` to a slope, or a callable
    taking ``(p, q)``.
    """
    best = math.inf
    pts = front.points
    for q in sorted(front.tri.neighbors[p]):
        s = _slope_for(slope, (p, q))
        length = float(np.linalg.norm(pts[p] - pts[q]))
        best = min(best, front.tau(q) + length * s)
    return HeightBound(best, "Causality")


def _others(tri, p):
    others = [int(v) for v in tri if v != p]
    if len(others) != 2:
        raise InvalidArgument(f"vertex {p} is not a corner of triangle {tuple(tri)}")
    return others


def causal_sup_2d(front: Front, p: int, tri, slope: float) -> HeightBound:
    """Causality limit on ``τ'(p)`` from one triangle ``pqr``.

    The new triangle is causal exactly when its gradient along the altitude
    from ``p`` stays below ``sqrt(S^2 - g^2)``, where ``g`` is the gradient
    along the opposite edge ``qr``.
    """
    q, r = _others(tri, p)
    pts = front.points
    tq, tr = front.tau(q), front.tau(r)
    qr_len = float(np.linalg.norm(pts[r] - pts[q]))
    g = abs(tr - tq) / qr_len
    if g >= slope:
        raise CausalityAlreadyViolated(f"edge {q}-{r} gradient {g} >= slope {slope}")
    foot = foot_of_perpendicular(pts[p], pts[q], pts[r])
    along = float((foot - pts[q]) @ (pts[r] - pts[q])) / qr_len ** 2
    tau_foot = tq + along * (tr - tq)
    height = float(np.linalg.norm(pts[p] - foot))
    return HeightBound(tau_foot + height * math.sqrt(slope * slope - g * g), "Causality")


def progress_sup_2d(front: Front, p: int, tri, slope: float, epsilon: float) -> HeightBound:
    """Progress limit on ``τ'(p)``: edges ``pq`` and ``pr`` must stay gentle."""
    q, r = _others(tri, p)
    pts = front.points
    order = [p, q, r]
    shape = TriangleShape(pts[order])
    best = None
    for idx, other in ((1, q), (2, r)):
        length = float(np.linalg.norm(pts[p] - pts[other]))
        phi_e = shape.phi_edge(0, idx)
        bound = HeightBound(
            front.tau(other) + (1.0 - epsilon) * phi_e * slope * length,
            "ProgressEdge",
            ("pq" if idx == 1 else "pr",),
        )
        best = bound if best is None or bound < best else best
    return best


def satisfies_progress(front: Front, tri, slope: float, epsilon: float,
                       all_edges: bool = False) -> bool:
    """True when every highest edge obeys ``|Δτ| / len <= (1-ε) S φ_e``.

    With ``all_edges`` the bound is checked on all three edges.  This
    stronger form is the one that survives advancing the lowest vertex
    (see :func:`progress_sup_2d`), so the lookahead decisions use it.
    """
    tri = [int(v) for v in tri]
    times = [front.tau(v) for v in tri]
    low = min(times)
    shape = TriangleShape(front.points[tri])
    for i, t in enumerate(times):
        if t != low and not all_edges:
            continue
        j, k = (i + 1) % 3, (i + 2) % 3
        length = shape.edge_lengths[i]
        bound = (1.0 - epsilon) * slope * shape.phi_edge(j, k)
        if abs(times[k] - times[j]) / length > bound * (1 + BOUND_RTOL) + 1e-15:
            return False
    return True


def diminished_width(coords, epsilon: float, phi_bar: float) -> float:
    """Apex-weighted minimum altitude; ``coords[0]`` is the apex."""
    shape = TriangleShape(coords)
    h = shape.altitudes
    return min((1 - epsilon) * h[0], (1 - phi_bar) * h[1], (1 - phi_bar) * h[2])


def _adaptive_terms(coords, epsilon, phi_bar):
    """Right-hand sides (divided by S) of the four adaptive inequalities.

    ``coords`` are the points ``a, b, c`` with apex ``a``.  Returns the
    bounds on ``|τa-τb|``, ``|τa-τd|``, ``|τa-τc|`` and ``|τb-τc|`` where
    ``d`` is the midpoint of the base ``bc``.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in coords)
    d = (b + c) / 2
    e = (a + c) / 2
    dw = lambda *pts: diminished_width(np.array(pts), epsilon, phi_bar)  # noqa: E731
    return (
        2 * dw(d, c, a),
        dw(a, b, c),
        2 * dw(d, a, b),
        4 * dw(e, a, d),
    )


def _check_params(epsilon, phi_bar):
    if not (0 < epsilon < phi_bar < (1 + epsilon) / 2 < 1):
        raise InvalidArgument("parameters must satisfy 0 < ε < φ̄ < (1+ε)/2 < 1")


def satisfies_adaptive(front: Front, tri, slope: float, epsilon: float, phi_bar: float) -> bool:
    """Adaptive progress test for the triangle ``tri = (apex a, b, c)``."""
    a, b, c = (int(v) for v in tri)
    ta, tb, tc = front.tau(a), front.tau(b), front.tau(c)
    td = (tb + tc) / 2
    bounds = _adaptive_terms(front.points[[a, b, c]], epsilon, phi_bar)
    diffs = (abs(ta - tb), abs(ta - td), abs(ta - tc), abs(tb - tc))
    return all(
        diff <= bound * slope * (1 + BOUND_RTOL) + 1e-15 for diff, bound in zip(diffs, bounds)
    )


def satisfies_adaptive_by_angles(
    front: Front, tri, slope: float, epsilon: float, phi_bar: float
) -> bool:
    """The same test written with edge lengths and sines of angles."""
    a, b, c = (int(v) for v in tri)
    pa, pb, pc = (front.points[v] for v in (a, b, c))
    pd = (pb + pc) / 2
    ta, tb, tc = front.tau(a), front.tau(b), front.tau(c)
    td = (tb + tc) / 2

    def ang(x, y, z):
        """Angle at ``y`` of the path x-y-z."""
        u, v = x - y, z - y
        return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), u @ v)

    s = math.sin
    k1, k2 = 1 - epsilon, 2 * (1 - phi_bar)
    checks = [
        (abs(ta - tb), np.linalg.norm(pa - pb),
         min(k1 * s(ang(pb, pa, pc)), k2 * s(ang(pb, pa, pd)), k2 * s(ang(pa, pb, pc)))),
        (abs(ta - td), np.linalg.norm(pa - pd),
         min(k1 * s(ang(pa, pd, pc)), k2 * s(ang(pd, pa, pc)), k2 * s(ang(pd, pa, pb)))),
        (abs(ta - tc), np.linalg.norm(pa - pc),
         min(k1 * s(ang(pb, pa, pc)), k2 * s(ang(pa, pc, pb)), k2 * s(ang(pd, pa, pc)))),
        (abs(tb - tc), np.linalg.norm(pb - pc),
         min(k1 * s(ang(pb, pd, pa)), k2 * s(ang(pa, pc, pb)), k2 * s(ang(pa, pb, pc)))),
    ]
    return all(
        diff <= length * factor * slope * (1 + BOUND_RTOL) + 1e-15
        for diff, length, factor in checks
    )


def adaptive_sup_2d(
    front: Front, p: int, tri, slope: float, epsilon: float, phi_bar: float
) -> HeightBound:
    """Largest ``τ'(p)`` keeping ``tri = (apex, b, c)`` adaptively progressive.

    Each of the adaptive inequalities that involves ``p`` yields an upper
    bound on ``τ'(p)`` with the other two times held fixed; the result is
    the smallest of them.  The binding names the apex case after sorting
    the triangle's vertices by time (``p`` lowest, then ``q``, then ``r``)
    and the 1-based index of the binding inequality.
    """
    _check_params(epsilon, phi_bar)
    a, b, c = (int(v) for v in tri)
    if p not in (a, b, c):
        raise InvalidArgument(f"vertex {p} is not a corner of triangle {tuple(tri)}")
    ta, tb, tc = front.tau(a), front.tau(b), front.tau(c)
    k_ab, k_ad, k_ac, k_bc = (s * slope for s in _adaptive_terms(front.points[[a, b, c]], epsilon, phi_bar))
    if p == a:
        cands = [(tb + k_ab, 1), ((tb + tc) / 2 + k_ad, 2), (tc + k_ac, 3)]
    elif p == b:
        cands = [(ta + k_ab, 1), (2 * (ta + k_ad) - tc, 2), (tc + k_bc, 4)]
    else:
        cands = [(ta + k_ac, 3), (2 * (ta + k_ad) - tb, 2), (tb + k_bc, 4)]
    value, term = min(cands)
    q, r = sorted((v for v in (a, b, c) if v != p), key=lambda v: (front.tau(v), v))
    case = "p" if a == p else ("q" if a == q else "r")
    return HeightBound(value, "AdaptiveCase", (case, term))


def min_tentpole_guarantee(epsilon: float, slope: float, width: float) -> float:
    """Worst-case tentpole height at a local minimum: ``min{ε,1-ε}·w_p·S``."""
    return min(epsilon, 1.0 - epsilon) * width * slope


def altitude(coords, i: int) -> float:
    """Distance from vertex ``i`` of a triangle to its opposite edge line."""
    coords = np.asarray(coords, dtype=float)
    j, k = (i + 1) % 3, (i + 2) % 3
    return distance_to_line(coords[i], coords[j], coords[k])

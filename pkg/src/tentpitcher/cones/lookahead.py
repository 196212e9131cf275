"""Lookahead decisions for variable wavespeed.

A triangle is described by its three spatial corners and their front
times; corner 0 is the apex.  ``S(tri)`` is the field minimum over the
lifted triangle and ``minS`` the global minimum slope of the field.
"""

from __future__ import annotations

import math

import numpy as np

from ..constraints import (
    ConstraintParams,
    adaptive_sup_2d,
    causal_sup_2d,
    progress_sup_2d,
    satisfies_adaptive,
    satisfies_progress,
)
from ..errors import CausalityAlreadyViolated, EstimateNotConverged
from ..front import Front, Triangulation, simplex_gradient
from ..mesh_core import distance_to_line

REFINE = "Refine"
COARSENABLE = "Coarsenable"
KEEP = "Keep"

#: Wavespeed ratios above this call for refinement; below the other, coarsening.
MACH_REFINE_RATIO = 4.0
MACH_COARSEN_RATIO = 2.0

_TRI = (0, 1, 2)


def _front(coords, times) -> Front:
    return Front(Triangulation(np.asarray(coords, dtype=float), [_TRI]), times)


def _slope(field, coords, times) -> float:
    return field.facet_min(coords, times)


def _causal(coords, times, field) -> bool:
    grad = float(np.linalg.norm(simplex_gradient(coords, times)))
    return grad < _slope(field, coords, times)


def _progress(front, slope, params, adaptive) -> bool:
    if adaptive:
        return satisfies_adaptive(front, _TRI, slope, params.epsilon, params.phi_bar)
    return satisfies_progress(front, _TRI, slope, params.epsilon, all_edges=True)


def _lowest(times) -> list:
    low = min(times)
    return [i for i in range(3) if times[i] == low]


def _altitude(coords, i) -> float:
    return distance_to_line(coords[i], coords[(i + 1) % 3], coords[(i + 2) % 3])


def _lift(times, i, t) -> np.ndarray:
    out = np.array(times, dtype=float)
    out[i] = t
    return out


def is_h_progressive(coords, times, h: int, field, params: ConstraintParams,
                     adaptive: bool = False) -> bool:
    """Decide whether the triangle is h-progressive.

    With ``h = 0`` the triangle must be causal and satisfy the progress
    constraint at ``minS``.  For larger ``h`` it must be causal and, for each
    lowest corner advanced by ``min{ε,1-ε}·minS·d_p``, the triangle must
    satisfy progress at the advanced triangle's slope while the advanced
    triangle is (h-1)-progressive.
    ``adaptive`` swaps the progress test for the adaptive one.
    """
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    if not _causal(coords, times, field):
        return False
    min_s = field.min_slope
    if h == 0:
        return _progress(_front(coords, times), min_s, params, adaptive)
    for i in _lowest(times):
        step = params.eps_hat * min_s * _altitude(coords, i)
        nxt = _lift(times, i, times[i] + step)
        if not _progress(_front(coords, times), _slope(field, coords, nxt), params, adaptive):
            return False
        if not is_h_progressive(coords, nxt, h - 1, field, params, adaptive):
            return False
    return True


def _sup_under(coords, times, p, est, causal_slope, params, adaptive) -> float:
    front = _front(coords, times)
    causal = causal_sup_2d(front, p, _TRI, causal_slope).sup_value
    if adaptive:
        prog = adaptive_sup_2d(front, p, _TRI, est, params.epsilon, params.phi_bar).sup_value
    else:
        prog = progress_sup_2d(front, p, _TRI, est, params.epsilon).sup_value
    return min(causal, prog)


def estimate_progress(coords, times, p: int, h: int, field, params: ConstraintParams,
                      adaptive: bool = False, cap: int = 64) -> float:
    """The slope-estimate iteration on its own; returns a supremum.

    The estimate starts at ``minS``.  Each round lifts ``p`` as far as
    causality and progress at the estimate allow, asks
    :func:`future_slope` what slope the following step will see, lifts
    again under that slope and raises the estimate when the realised slope
    is larger.  The round that leaves the estimate unchanged gives the
    answer.

    Raises:
        EstimateNotConverged: after ``cap`` rounds; ``last_value`` holds the
            most recent answer.
    """
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    causal_slope = field.future_min(coords, times)
    est = field.min_slope
    value = times[p]
    for _ in range(cap):
        value = _sup_under(coords, times, p, est, causal_slope, params, adaptive)
        ahead = future_slope(coords, _lift(times, p, value), h - 1, field, params, adaptive)
        again = _sup_under(coords, times, p, ahead, causal_slope, params, adaptive)
        realised = _slope(field, coords, _lift(times, p, again))
        if realised > est:
            est = realised
            continue
        return value
    raise EstimateNotConverged(f"slope estimate still rising after {cap} rounds", value)


def guaranteed_step(coords, p: int, field, params: ConstraintParams) -> float:
    """``min{ε,1-ε}·minS·d_p``: an advance that keeps h-progressive triangles so."""
    return params.eps_hat * field.min_slope * _altitude(np.asarray(coords, dtype=float), p)


def settle_height(coords, times, p: int, candidate: float, h: int, field,
                  params: ConstraintParams, adaptive: bool = False, iterations: int = 32) -> float:
    """Largest checked time at or below ``candidate`` that passes the decision.

    ``candidate`` is first backed off by ``δ``.  When the decision rejects
    it, bisection runs between the guaranteed step (accepted whenever the
    input triangle is h-progressive) and the candidate.
    """
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    base = times[p]
    top = base + (1.0 - params.delta) * (candidate - base)

    def ok(t):
        return is_h_progressive(coords, _lift(times, p, t), h, field, params, adaptive)

    if ok(top):
        return top
    lo = base + min(guaranteed_step(coords, p, field, params), top - base)
    hi = top
    if not ok(lo):
        return lo
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def maximize_progress(coords, times, p: int, h: int, field, params: ConstraintParams,
                      adaptive: bool = False, cap: int = 64) -> float:
    """New time of corner ``p`` that keeps the triangle h-progressive.

    Runs :func:`estimate_progress` and then :func:`settle_height`, so the
    returned time is itself feasible (no further back-off is needed) and
    passes :func:`is_h_progressive` whenever the input triangle does.

    Raises:
        EstimateNotConverged: when the estimate does not settle in ``cap``
            rounds; ``last_value`` is the settled form of the last answer.
    """
    try:
        value = estimate_progress(coords, times, p, h, field, params, adaptive, cap)
    except EstimateNotConverged as exc:
        last = settle_height(coords, times, p, exc.last_value, h, field, params, adaptive)
        raise EstimateNotConverged(str(exc), last) from None
    return settle_height(coords, times, p, value, h, field, params, adaptive)


def future_slope(coords, times, h: int, field, params: ConstraintParams,
                 adaptive: bool = False) -> float:
    """Slope the triangle will see after its local minima advance ``h`` steps ahead."""
    if h <= 0:
        return field.min_slope
    best = math.inf
    for i in _lowest(times):
        try:
            t = estimate_progress(coords, times, i, h, field, params, adaptive)
        except EstimateNotConverged as exc:
            t = exc.last_value
        except CausalityAlreadyViolated:
            return field.min_slope
        best = min(best, _slope(field, coords, _lift(times, i, t)))
    return best


def bisection_children(coords, times):
    """Children of a newest-vertex bisection: apex ``m`` first in each."""
    coords = np.asarray(coords, dtype=float)
    times = np.asarray(times, dtype=float)
    m = (coords[1] + coords[2]) / 2
    tm = (times[1] + times[2]) / 2
    a, b, c = coords
    ta, tb, tc = times
    return [
        (np.array([m, a, b]), np.array([tm, ta, tb])),
        (np.array([m, c, a]), np.array([tm, tc, ta])),
    ]


def is_hl_progressive(coords, times, h: int, l: int, field, params: ConstraintParams) -> bool:
    """h-progressive now and, ``l`` bisection levels down, adaptively so."""
    if l <= 0:
        return is_h_progressive(coords, times, h, field, params, adaptive=True)
    if not is_h_progressive(coords, times, h, field, params):
        return False
    return all(
        is_hl_progressive(cc, ct, h, l - 1, field, params)
        for cc, ct in bisection_children(coords, times)
    )


def wavespeed_ratio(coords, times, field) -> float:
    """Ratio of the fastest to the slowest wavespeed over the triangle's future."""
    return field.future_max(coords, times) / field.future_min(coords, times)


def mach_refine_decision(coords, times, field) -> str:
    ratio = wavespeed_ratio(coords, times, field)
    if ratio > MACH_REFINE_RATIO:
        return REFINE
    if ratio < MACH_COARSEN_RATIO:
        return COARSENABLE
    return KEEP


def refine_to_mach_fixpoint(forest, field, max_level: int = 12, max_rounds: int = 10_000) -> int:
    """Refine every leaf whose wavespeed ratio calls for it until none does.

    Leaves at ``max_level`` are left alone.  Returns the number of
    refinements performed.
    """
    count = 0
    for _ in range(max_rounds):
        todo = None
        for leaf in forest.leaves:
            if leaf.level >= max_level:
                continue
            coords = np.array([forest.points[v] for v in leaf.verts])
            times = np.array([forest.times[v] for v in leaf.verts])
            if mach_refine_decision(coords, times, field) == REFINE:
                todo = leaf
                break
        if todo is None:
            return count
        forest.refine_earnest(todo)
        count += 1
    return count

"""Piecewise-constant spacetime fields.

A field is a default value overridden by a list of regions.  Each region is
a spatial shape (disc, half-plane or axis-aligned rectangle) paired with a
half-open time interval ``[t0, t1)``; later regions override earlier ones.
The same class serves as the wavespeed field (values are causal slopes) and
as the mock solver's target length-scale field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import InvalidArgument

_EPS = 1e-12


def _as_coords(coords) -> np.ndarray:
    pts = np.asarray(coords, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _clip_halfplane(poly: list, normal: np.ndarray, offset: float) -> list:
    """Sutherland-Hodgman clip of a convex polygon by ``normal . x <= offset``."""
    out = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        dc = float(normal @ cur) - offset
        dn = float(normal @ nxt) - offset
        if dc <= 0.0:
            out.append(cur)
        if (dc < 0.0 < dn) or (dn < 0.0 < dc):
            out.append(cur + (dc / (dc - dn)) * (nxt - cur))
    return out


class Shape:
    """Closed convex spatial region."""

    dim: int

    def contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def extreme_points(self, coords: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Points of ``shape ∩ simplex`` containing both extremes of ``grad . x``.

        Returns an empty array when the shape misses the simplex.
        """
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class HalfSpace(Shape):
    """The set ``normal . x <= offset``."""

    normal: tuple
    offset: float

    @property
    def dim(self) -> int:
        return len(self.normal)

    def planes(self):
        return [(np.asarray(self.normal, dtype=float), float(self.offset))]

    def contains(self, pts):
        pts = _as_coords(pts)
        return pts @ np.asarray(self.normal, dtype=float) <= self.offset + _EPS

    def extreme_points(self, coords, grad):
        return _clip_simplex(coords, self.planes())

    def to_dict(self):
        return {"shape": "half-plane", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Rect(Shape):
    """Axis-aligned box ``lo <= x <= hi`` (an interval in 1D)."""

    lo: tuple
    hi: tuple

    @property
    def dim(self) -> int:
        return len(self.lo)

    def planes(self):
        out = []
        for axis in range(self.dim):
            e = np.zeros(self.dim)
            e[axis] = 1.0
            out.append((e, float(self.hi[axis])))
            out.append((-e, -float(self.lo[axis])))
        return out

    def contains(self, pts):
        pts = _as_coords(pts)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        return np.all((pts >= lo - _EPS) & (pts <= hi + _EPS), axis=1)

    def extreme_points(self, coords, grad):
        return _clip_simplex(coords, self.planes())

    def to_dict(self):
        return {"shape": "rect", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Disc(Shape):
    """Closed disc (an interval in 1D)."""

    center: tuple
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, pts):
        pts = _as_coords(pts)
        c = np.asarray(self.center, dtype=float)
        return np.linalg.norm(pts - c, axis=1) <= self.radius + _EPS

    def extreme_points(self, coords, grad):
        coords = _as_coords(coords)
        c = np.asarray(self.center, dtype=float)
        if self.dim == 1:
            box = Rect((c[0] - self.radius,), (c[0] + self.radius,))
            return box.extreme_points(coords, grad)
        r = self.radius
        cands = [v for v in coords if np.linalg.norm(v - c) <= r + _EPS]
        for i in range(3):
            a, b = coords[i], coords[(i + 1) % 3]
            d = b - a
            f = a - c
            qa, qb, qc = d @ d, 2 * (f @ d), f @ f - r * r
            disc = qb * qb - 4 * qa * qc
            if disc < 0:
                continue
            root = math.sqrt(disc)
            for s in ((-qb - root) / (2 * qa), (-qb + root) / (2 * qa)):
                if -_EPS <= s <= 1 + _EPS:
                    cands.append(a + min(max(s, 0.0), 1.0) * d)
        gnorm = float(np.linalg.norm(grad))
        direction = grad / gnorm if gnorm > 0 else np.array([1.0, 0.0])
        for sign in (-1.0, 1.0):
            q = c + sign * r * direction
            if _in_triangle(coords, q):
                cands.append(q)
        if not cands and _in_triangle(coords, c):
            cands.append(c)
        return np.array(cands) if cands else np.empty((0, 2))

    def to_dict(self):
        return {"shape": "disc", "center": list(self.center), "radius": self.radius}


def _in_triangle(coords: np.ndarray, q: np.ndarray) -> bool:
    (ax, ay), (bx, by), (cx, cy) = coords
    ux, uy, vx, vy = bx - ax, by - ay, cx - ax, cy - ay
    det = ux * vy - uy * vx
    qx, qy = q[0] - ax, q[1] - ay
    l0 = (qx * vy - qy * vx) / det
    l1 = (ux * qy - uy * qx) / det
    return bool(l0 >= -1e-12 and l1 >= -1e-12 and l0 + l1 <= 1 + 1e-12)


def _clip_simplex(coords: np.ndarray, planes) -> np.ndarray:
    coords = _as_coords(coords)
    if coords.shape[1] == 1:
        lo, hi = float(coords.min()), float(coords.max())
        for normal, offset in planes:
            n = float(normal[0])
            if n > 0:
                hi = min(hi, offset / n)
            elif n < 0:
                lo = max(lo, offset / n)
            elif offset < 0:
                return np.empty((0, 1))
        if lo > hi + _EPS:
            return np.empty((0, 1))
        return np.array([[lo], [max(lo, hi)]])
    poly = [row for row in coords]
    for normal, offset in planes:
        poly = _clip_halfplane(poly, normal, offset)
        if not poly:
            return np.empty((0, 2))
    return np.array(poly)


@dataclass(frozen=True)
class Region:
    shape: Shape
    t0: float
    t1: float
    value: float

    def active(self, t) -> bool:
        return self.t0 <= t < self.t1


def shape_from_dict(entry: dict, dim: int | None = None) -> Shape:
    kind = entry.get("shape")
    if kind == "disc":
        return Disc(tuple(float(v) for v in entry["center"]), float(entry["radius"]))
    if kind in ("half-plane", "halfplane"):
        return HalfSpace(tuple(float(v) for v in entry["normal"]), float(entry["offset"]))
    if kind in ("rect", "interval"):
        return Rect(tuple(float(v) for v in entry["lo"]), tuple(float(v) for v in entry["hi"]))
    raise InvalidArgument(f"unknown region shape {kind!r}")


@dataclass
class WavespeedField:
    """Piecewise-constant field of positive values (causal slopes by default)."""

    default: float
    regions: list = field(default_factory=list)
    _memo: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    #: Facet queries remembered before the memo is cleared.
    MEMO_SIZE = 100_000

    def __post_init__(self):
        values = [self.default] + [r.value for r in self.regions]
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise InvalidArgument("field values must be positive and finite")
        for r in self.regions:
            if not r.t0 < r.t1:
                raise InvalidArgument("region time interval must satisfy t0 < t1")

    @classmethod
    def constant(cls, value: float) -> "WavespeedField":
        return cls(float(value), [])

    @classmethod
    def from_dict(cls, data: dict) -> "WavespeedField":
        regions = []
        for entry in data.get("regions", []):
            regions.append(
                Region(
                    shape_from_dict(entry),
                    float(entry.get("t0", -math.inf)),
                    float(entry.get("t1", math.inf)),
                    float(entry["value"]),
                )
            )
        return cls(float(data["default"]), regions)

    def to_dict(self) -> dict:
        out = []
        for r in self.regions:
            entry = r.shape.to_dict()
            entry.update({"t0": r.t0, "t1": r.t1, "value": r.value})
            out.append(entry)
        return {"default": self.default, "regions": out}

    @cached_property
    def min_slope(self) -> float:
        return min([self.default] + [r.value for r in self.regions])

    @cached_property
    def max_slope(self) -> float:
        return max([self.default] + [r.value for r in self.regions])

    @property
    def is_constant(self) -> bool:
        return self.min_slope == self.max_slope

    def value_at(self, point) -> float:
        """Value at a spacetime point ``(x..., t)``: last region containing it."""
        point = np.asarray(point, dtype=float)
        x, t = point[:-1], float(point[-1])
        for region in reversed(self.regions):
            if region.active(t) and bool(region.shape.contains(x[None, :])[0]):
                return region.value
        return self.default

    slope_at = value_at

    def _facet_values(self, coords, times, future: bool) -> list:
        coords = _as_coords(coords)
        times = np.asarray(times, dtype=float)
        if not self.regions:
            return [self.default]
        key = (coords.tobytes(), coords.shape, times.tobytes(), future)
        hit = self._memo.get(key)
        if hit is None:
            if len(self._memo) >= self.MEMO_SIZE:
                self._memo.clear()
            hit = self._memo[key] = self._facet_values_uncached(coords, times, future)
        return hit

    def _facet_values_uncached(self, coords, times, future: bool) -> list:
        from ..front import simplex_gradient

        grad = simplex_gradient(coords, times)
        t_lo_all = float(times.min())
        t_hi_all = math.inf if future else float(times.max())

        def tau(pts):
            return times[0] + (pts - coords[0]) @ grad

        applies = []
        full_upto = -1
        for i, region in enumerate(self.regions):
            pts = region.shape.extreme_points(coords, grad)
            if pts.shape[0] == 0:
                applies.append(False)
                continue
            vals = tau(pts)
            lo = float(vals.min())
            hi = math.inf if future else float(vals.max())
            applies.append(lo < region.t1 and hi >= region.t0 - _EPS)
            covers = bool(np.all(region.shape.contains(coords)))
            lasts = t_hi_all < region.t1 or region.t1 == math.inf
            if covers and region.t0 <= t_lo_all and lasts:
                full_upto = i
        values = [] if full_upto >= 0 else [self.default]
        start = max(full_upto, 0)
        values += [r.value for r, ok in zip(self.regions[start:], applies[start:]) if ok]
        return values

    def facet_min(self, coords, times) -> float:
        """Minimum value over the lifted simplex (conservative: never too high)."""
        return min(self._facet_values(coords, times, future=False))

    def facet_max(self, coords, times) -> float:
        """Maximum value over the lifted simplex (conservative: never too low)."""
        return max(self._facet_values(coords, times, future=False))

    def future_min(self, coords, times) -> float:
        """Minimum value over the simplex's spatial extent from its lowest time on."""
        return min(self._facet_values(coords, times, future=True))

    def future_max(self, coords, times) -> float:
        """Maximum value over the simplex's spatial extent from its lowest time on."""
        return max(self._facet_values(coords, times, future=True))

    def monotonicity_violations(self, samples: int = 10_000, seed: int = 0, box=None) -> int:
        """Count sampled pairs ``(x, t < t')`` where the value increases in time."""
        rng = np.random.default_rng(seed)
        dim = self.regions[0].shape.dim if self.regions else 2
        lo, hi = box if box is not None else (np.full(dim, -2.0), np.full(dim, 2.0))
        times = [r.t0 for r in self.regions] + [r.t1 for r in self.regions]
        finite = [t for t in times if math.isfinite(t)] or [0.0]
        t_lo, t_hi = min(finite) - 1.0, max(finite) + 1.0
        bad = 0
        for _ in range(samples):
            x = rng.uniform(lo, hi)
            t, t2 = np.sort(rng.uniform(t_lo, t_hi, size=2))
            if self.value_at([*x, t2]) > self.value_at([*x, t]):
                bad += 1
        return bad

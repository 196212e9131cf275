"""Brute-force checks of a finished run.

:func:`verify_suite` takes the spacetime elements, the event log and
whatever else the run left behind, and re-derives each guarantee
independently of the driver that produced the mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..adapt import degree_bound
from ..errors import ClassUndefined, DegenerateSimplex
from ..front import simplex_gradient
from ..pitcher import mesh_count_bound, temporal_aspect_ratio, verify_weak_complex
from ..spacetime import OUTFLOW

#: Slack when comparing a logged tentpole height with its promised floor.
HEIGHT_TOL = 1e-12
#: Relative slack for the aspect-ratio bound.
ASPECT_TOL = 1e-9
#: Largest number of homothety classes newest-vertex bisection may create per root.
MAX_CLASSES = 8


@dataclass
class Check:
    ok: bool
    detail: str = ""
    skipped: bool = False


@dataclass
class SuiteReport:
    """Named checks; skipped checks count as passing."""

    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks.values())

    def summary(self) -> dict:
        return {k: ("skip" if c.skipped else "pass" if c.ok else "fail")
                for k, c in self.checks.items()}

    def lines(self) -> list:
        out = []
        for name, c in self.checks.items():
            status = "SKIP" if c.skipped else "PASS" if c.ok else "FAIL"
            out.append(f"{status} {name}" + (f": {c.detail}" if c.detail else ""))
        return out


def _skip(reason: str) -> Check:
    return Check(True, reason, skipped=True)


def check_causality(elements, events, field_=None) -> Check:
    """Every logged pitch left a causal front and, with a field, every outflow facet is causal."""
    flagged = [e["step"] for e in events if e.get("op") == "pitch" and e.get("causal") is False]
    if flagged:
        return Check(False, f"{len(flagged)} pitches logged non-causal facets, first at step {flagged[0]}")
    if field_ is None:
        return Check(True, "from log flags only")
    bad = 0
    for el in elements:
        for i, label in enumerate(el.labels):
            if label != OUTFLOW:
                continue
            facet = np.delete(el.coords, i, axis=0)
            x, t = facet[:, :-1], facet[:, -1]
            grad = float(np.linalg.norm(simplex_gradient(x, t)))
            if not grad < field_.facet_min(x, t):
                bad += 1
    if bad:
        return Check(False, f"{bad} outflow facets are not causal")
    return Check(True, f"{len(elements)} elements")


def check_tentpoles(events, tol: float = HEIGHT_TOL) -> Check:
    """Each pitch with a logged floor is at least that high (up to ``tol``)."""
    pitched = [e for e in events if e.get("op") == "pitch" and e.get("floor") is not None]
    if not pitched:
        return _skip("no pitch carries a promised height")
    short = [e for e in pitched if e["t_new"] - e["t_old"] < e["floor"] - tol]
    if short:
        e = short[0]
        return Check(False, f"{len(short)} short tentpoles; step {e['step']} rose "
                            f"{e['t_new'] - e['t_old']!r} below floor {e['floor']!r}")
    worst = min((e["t_new"] - e["t_old"]) / e["floor"] for e in pitched)
    return Check(True, f"{len(pitched)} pitches, min height/floor {worst:.6g}")


def aspect_bound(epsilon: float, min_slope: float, max_slope: float) -> float:
    """``min{ε,1-ε}/2`` scaled by the slope ratio of the field."""
    return min(epsilon, 1 - epsilon) / 2 * (min_slope / max_slope)


def check_aspect(elements, bound: float | None) -> Check:
    if bound is None:
        return _skip("no bound applies to this mode")
    if not elements:
        return _skip("no elements")
    ratios = []
    for el in elements:
        try:
            ratios.append(temporal_aspect_ratio(el))
        except DegenerateSimplex:
            return Check(False, "an element has zero duration")
    worst = min(ratios)
    ok = worst >= bound * (1 - ASPECT_TOL)
    return Check(ok, f"min ratio {worst:.6g} vs bound {bound:.6g}")


def check_weak_complex(elements) -> Check:
    report = verify_weak_complex(elements)
    if report.ok:
        return Check(True, f"{report.checked} candidate pairs")
    kind, pair = report.violations[0]
    return Check(False, f"{len(report.violations)} bad pairs, first {kind} {pair}")


def check_count(n_elements: int, bound: int | None) -> Check:
    if bound is None:
        return _skip("count bound needs a constant field and a progress mode")
    return Check(n_elements <= bound, f"{n_elements} elements vs bound {bound}")


def check_degree(max_degree: int | None, initial_max_degree: int | None) -> Check:
    if max_degree is None or initial_max_degree is None:
        return _skip("no refinement forest")
    limit = degree_bound(initial_max_degree)
    return Check(max_degree <= limit, f"max degree {max_degree} vs {limit}")


def check_homothety(classes_per_root: int | None) -> Check:
    if classes_per_root is None:
        return _skip("no refinement forest")
    return Check(classes_per_root <= MAX_CLASSES,
                 f"at most {classes_per_root} classes per root")


def forest_artifacts(forest) -> dict:
    """Degree and homothety figures of a refinement forest."""
    per_root: dict = {}
    for node in forest.nodes:
        try:
            cls = forest.homothety_class(node)
        except ClassUndefined:
            continue
        per_root.setdefault(node.root, set()).add(cls)
    return {
        "max_degree": forest.max_degree(),
        "initial_max_degree": forest.initial_max_degree,
        "classes_per_root": max((len(v) for v in per_root.values()), default=1),
    }


def run_artifacts(driver) -> dict:
    """Everything :func:`verify_suite` needs from a finished driver."""
    out = {
        "events": driver.events,
        "field": driver.field,
        "space_mesh": driver.mesh,
    }
    if driver.forest is not None:
        out.update(forest_artifacts(driver.forest))
        out["max_degree"] = max(out["max_degree"], driver.stats.get("max_degree", 0))
    return out


def run_config(policy, field_) -> dict:
    return {"mode": policy.mode, "epsilon": policy.params.epsilon, "target": policy.target,
            "min_slope": field_.min_slope, "max_slope": field_.max_slope}


def verify_suite(mesh, artifacts: dict, config: dict) -> SuiteReport:
    """Run every check that the artifacts allow.

    ``mesh`` is a spacetime mesh or a list of elements.  ``artifacts``
    holds ``events`` and optionally
    ``field``, ``space_mesh``, ``count_bound``, ``max_degree``,
    ``initial_max_degree`` and ``classes_per_root``.  ``config`` holds
    ``mode``, ``epsilon``, ``target``, ``min_slope`` and ``max_slope``.
    The aspect-ratio and count bounds apply to the linear and nonlocal modes.
    """
    elements = list(getattr(mesh, "elements", mesh))
    events = list(artifacts.get("events", []))
    mode = config.get("mode")
    proven = mode in ("linear", "nonlocal")
    report = SuiteReport()
    report.checks["causality"] = check_causality(elements, events, artifacts.get("field"))
    report.checks["tentpoles"] = check_tentpoles(events)
    bound = None
    if proven and config.get("epsilon") is not None:
        bound = aspect_bound(config["epsilon"], config["min_slope"], config["max_slope"])
    report.checks["aspect_ratio"] = check_aspect(elements, bound)
    report.checks["weak_complex"] = check_weak_complex(elements)
    # A bound recomputed from the input mesh wins over a recorded one.
    count = artifacts.get("count_bound")
    if proven and artifacts.get("space_mesh") is not None \
            and config.get("min_slope") == config.get("max_slope"):
        count = mesh_count_bound(artifacts["space_mesh"], config["target"],
                                 config["min_slope"], config["epsilon"])
    report.checks["count_bound"] = check_count(len(elements), count if proven else None)
    report.checks["degree"] = check_degree(artifacts.get("max_degree"),
                                           artifacts.get("initial_max_degree"))
    report.checks["homothety"] = check_homothety(artifacts.get("classes_per_root"))
    return report


__all__ = [
    "Check",
    "SuiteReport",
    "aspect_bound",
    "check_aspect",
    "check_causality",
    "check_count",
    "check_degree",
    "check_homothety",
    "check_tentpoles",
    "check_weak_complex",
    "forest_artifacts",
    "run_artifacts",
    "run_config",
    "verify_suite",
]

"""Target-time conformity and scheduled coarsening.

Every vertex ``p`` carries a target time ``T_p`` and a worst-case tentpole
height ``h_p``.  The driver keeps the invariant

    τ(p) = T_p   or   τ(p) <= T_p - γ·h_p

so that the next tentpole at ``p`` can always be at least ``γ·h_p`` tall
while landing exactly on ``T_p`` once it is within reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoarsenRejected, CycleUnsupported, InvalidArgument, InvariantViolation
from .front import Front
from .pitcher import PitchPolicy, Pitcher

#: Case numbers returned by :func:`choose_height`.
CASE_TARGET, CASE_BELOW, CASE_FREE = 1, 2, 3


def choose_height(tau_p: float, sup: float, target: float, gamma: float, h_p: float,
                  with_case: bool = False):
    """New tentpole top under the three-case rule.

    ``sup`` is the highest feasible top.  Reaching ``target`` takes it
    (case 1); landing within ``γ·h_p`` below it would leave too little room
    for the next step, so the top drops to ``target - (1-γ)·h_p`` (case 2);
    otherwise ``sup`` is used as is (case 3).

    Raises:
        InvalidArgument: if ``sup < tau_p``.
        InvariantViolation: if ``tau_p`` is neither at its target nor at
            least ``γ·h_p`` below it.
    """
    if sup < tau_p:
        raise InvalidArgument(f"feasible top {sup} is below the current time {tau_p}")
    if not invariant_holds(tau_p, target, gamma, h_p):
        raise InvariantViolation(
            f"τ={tau_p} is within γ·h_p={gamma * h_p} of its target {target}")
    if sup >= target:
        out = (target, CASE_TARGET)
    elif sup >= target - gamma * h_p:
        out = (target - (1 - gamma) * h_p, CASE_BELOW)
    else:
        out = (sup, CASE_FREE)
    return out if with_case else out[0]


def choose_height_heuristic(tau_p: float, sup: float, target: float) -> float:
    """Simpler rule: stop at the target, or halve the gap when it is short.

    With ``h = sup - τ_p``, a remaining gap ``target - sup`` shorter than
    ``h`` sends the top to the midpoint of ``τ_p`` and the target.
    """
    if sup < tau_p:
        raise InvalidArgument(f"feasible top {sup} is below the current time {tau_p}")
    if sup >= target:
        return target
    if target - sup < sup - tau_p:
        return (target + tau_p) / 2
    return sup


def smooth_height(h: float, h_p: float, gamma: float) -> float:
    """Average an unusually tall tentpole with the guaranteed height."""
    if h < 0 or h_p <= 0:
        raise InvalidArgument("heights must satisfy h >= 0 and h_p > 0")
    if h > (1 + gamma) * h_p:
        return (h + h_p) / 2
    return h


def invariant_holds(tau: float, target: float, gamma: float, h_p: float) -> bool:
    """``τ = T_p`` or ``τ <= T_p - γ·h_p`` (up to rounding in the last place)."""
    slack = 4 * np.finfo(float).eps * max(1.0, abs(target))
    return tau == target or tau <= target - gamma * h_p + slack


# --------------------------------------------------------------- clusters


@dataclass(frozen=True)
class CoarsenCluster:
    """Leaves around a bisection vertex ``s`` that may merge back together.

    ``verts`` lists ``s`` first and then its link vertices.
    """

    center: int
    verts: tuple
    target: float


@dataclass
class TargetState:
    """Per-vertex targets and guarantees for the current front."""

    global_target: float
    targets: dict = field(default_factory=dict)
    h: dict = field(default_factory=dict)
    clusters: dict = field(default_factory=dict)

    def target(self, v: int) -> float:
        return self.targets.get(v, self.global_target)


def cluster_centres(forest) -> dict:
    """Map each coarsenable centre to its cluster vertices.

    A centre is a vertex created by bisection whose incident leaves are all
    coarsenable and pair up as children of the parents it split: four
    leaves in the interior, two on the boundary.
    """
    out = {}
    seen = set()
    for leaf in forest.leaves:
        if not leaf.coarsenable or leaf.parent is None:
            continue
        s = leaf.apex
        if s in seen:
            continue
        seen.add(s)
        around = forest.incident_leaves(s)
        if not all(n.coarsenable and n.apex == s and n.parent is not None for n in around):
            continue
        parents = {n.parent.id: n.parent for n in around}
        if any(len(p.children) != 2 or not all(k.is_leaf for k in p.children)
               for p in parents.values()):
            continue
        interior = len(around) == 4 and len(parents) == 2
        boundary = len(around) == 2 and len(parents) == 1 and forest.boundary[s]
        if interior or boundary:
            out[s] = (s, *sorted(forest.vertex_neighbors(s)))
    return out


def assign_target_times(front: Front, forest, gamma: float, global_target: float,
                        h=None, previous=None) -> TargetState:
    """Targets from the current coarsenable clusters.

    ``l_v = τ(v) + γ·h_v``; a new cluster gets ``T_C = max l_v`` over its
    vertices (capped at the global target) and keeps it while it exists
    (``previous`` carries the clusters of the last call).  A vertex takes
    the smallest ``T_C`` among its clusters, else the global target.
    ``h`` maps a vertex to ``h_v`` (callable or dict).
    """
    h_of = h if callable(h) else (lambda v: h[v])
    state = TargetState(global_target)
    old = previous.clusters if previous is not None else {}
    found = cluster_centres(forest) if forest is not None else {}
    for s, verts in found.items():
        for v in verts:
            state.h.setdefault(v, h_of(v))
        if s in old and old[s].verts == verts:
            t_c = old[s].target
        else:
            t_c = min(global_target, max(front.tau(v) + gamma * state.h[v] for v in verts))
        state.clusters[s] = CoarsenCluster(s, verts, t_c)
    _apply_cluster_targets(state)
    return state


def _apply_cluster_targets(state: TargetState) -> None:
    state.targets = {}
    for cluster in state.clusters.values():
        for v in cluster.verts:
            state.targets[v] = min(state.targets.get(v, state.global_target), cluster.target)


def coarsen_scheduler(front: Front, targets: TargetState, forest) -> list:
    """Coarsen every cluster whose vertices all sit at the cluster target.

    Returns the list of executed ``(centre, merged parents)``.

    Raises:
        CycleUnsupported: when nothing merged and two ready clusters that
            share a vertex were both refused, so each waits on the other.
    """
    done, refused = [], []
    for s, cluster in sorted(targets.clusters.items()):
        if not forest.alive[s]:
            continue
        if not all(front.tau(v) == cluster.target for v in cluster.verts):
            continue
        leaf = forest.incident_leaves(s)[0]
        try:
            merged = forest.derefine(leaf)
        except CoarsenRejected:
            refused.append(cluster)
            continue
        done.append((s, merged))
    if not done:
        _check_cycle(refused)
    return done


def _check_cycle(refused: list) -> None:
    """Ready clusters that block each other can only merge simultaneously."""
    for i, a in enumerate(refused):
        for b in refused[i + 1:]:
            if set(a.verts) & set(b.verts):
                raise CycleUnsupported(
                    f"clusters {a.center} and {b.center} are ready but block each other")


# ----------------------------------------------------------------- driver


class ConformingPitcher(Pitcher):
    """Driver that lands every vertex on its target time."""

    def __init__(self, mesh, policy: PitchPolicy, field, solver=None, times=None, forest=None):
        super().__init__(mesh, policy, field, solver, times, forest)
        self.gamma = self.params.gamma
        self.state = TargetState(policy.target)
        self.min_ratio = math.inf
        self._refresh_targets()
        self._initial_refinement()

    # ------------------------------------------------------ guarantees

    def h_of(self, v: int) -> float:
        """Guaranteed height with the feasibility back-off already applied."""
        front = self.front()
        width = front.tri.width(v)
        return (1 - self.params.delta) * self.params.eps_hat * width * self.field.min_slope

    def _refresh_targets(self) -> None:
        front = self.front()
        self.state = assign_target_times(front, self.forest, self.gamma, self.policy.target,
                                         self.h_of, self.state)
        self._repair(front)

    def _repair(self, front: Front) -> None:
        """Raise cluster targets until their vertices satisfy the invariant."""
        for _ in range(100):
            changed = False
            for s, c in list(self.state.clusters.items()):
                need = c.target
                for v in c.verts:
                    tau = front.tau(v)
                    if not invariant_holds(tau, self.state.target(v), self.gamma, self.state.h[v]):
                        need = max(need, tau + self.gamma * self.state.h[v])
                need = min(need, self.policy.target)
                if need > c.target:
                    self.state.clusters[s] = CoarsenCluster(s, c.verts, need)
                    self.stats["target_repairs"] += 1
                    changed = True
            if not changed:
                return
            _apply_cluster_targets(self.state)

    def targets(self, front: Front):
        n = len(front.times)
        out = np.full(n, self.policy.target)
        for v, t in self.state.targets.items():
            out[v] = t
        return out

    def invariant_violations(self) -> list:
        front = self.front()
        bad = []
        for v in front.tri.vertices:
            v = int(v)
            h = self.state.h.get(v) or self.h_of(v)
            if not invariant_holds(front.tau(v), self.state.target(v), self.gamma, h):
                bad.append(v)
        return bad

    def _initial_refinement(self) -> None:
        """Refine around vertices that start too close to their target."""
        if self.forest is None:
            if self.invariant_violations():
                raise InvariantViolation("initial front violates the target invariant in 1D")
            return
        for _ in range(10_000):
            bad = self.invariant_violations()
            if not bad:
                return
            leaves = [leaf for leaf in self.forest.incident_leaves(bad[0])
                      if leaf.level < self.policy.max_level]
            if not leaves:
                raise InvariantViolation(f"vertex {bad[0]} cannot be refined further")
            self._refine_leaf(max(leaves, key=self.forest.diameter), "Initialize")
            self.forest.cleanup_all()
            self._refresh_targets()

    # ----------------------------------------------------------- hooks

    def choose_top(self, front: Front, p: int, t_feasible: float, guarantee: float) -> tuple:
        tau = front.tau(p)
        target = self.state.target(p)
        h_p = self.h_of(p)
        if self.policy.conform_rule == "heuristic":
            top = choose_height_heuristic(tau, t_feasible, target)
            return top, "|Target" if top == target else ""
        try:
            top, case = choose_height(tau, t_feasible, target, self.gamma, h_p, with_case=True)
        except InvariantViolation:
            self.stats["invariant_violations"] += 1
            top = choose_height_heuristic(tau, t_feasible, target)
            case = CASE_TARGET if top == target else CASE_FREE
        if case == CASE_FREE and self.policy.smoothing:
            top = tau + smooth_height(top - tau, h_p, self.gamma)
        self.min_ratio = min(self.min_ratio, (top - tau) / (self.gamma * h_p))
        return top, f"|Target{case}"

    def tentpole_floor(self, front: Front, p: int, guarantee: float):
        if self.policy.conform_rule == "heuristic":
            return None
        return self.gamma * self.h_of(p)

    def on_new_vertex(self, v: int) -> None:
        self.state.targets.pop(v, None)

    def after_commit(self, front: Front, p: int) -> None:
        self._refresh_targets()
        self._run_scheduler()
        bad = self.invariant_violations()
        if bad:
            self.stats["invariant_violations"] += len(bad)
            self._event("invariant", bad[0], None, None, "Violation")

    def _run_scheduler(self) -> int:
        if self.forest is None or not self.state.clusters:
            return 0
        done = coarsen_scheduler(self.front(), self.state, self.forest)
        for s, merged in done:
            self._event("coarsen", s, None, None, "Ready")
            self.stats["coarsenings"] += len(merged)
        if done:
            self._refresh_targets()
        return len(done)

    def on_idle(self, front: Front) -> bool:
        if self._run_scheduler():
            return True
        live = front.times[front.tri.vertices]
        if np.all(live == self.policy.target):
            return False
        self.stats["stalled"] += 1
        return False


def run_conforming(mesh, policy: PitchPolicy, field, target: float | None = None,
                   solver=None, forest=None):
    """Mesh up to the plane ``t = T`` exactly; returns the spacetime mesh.

    The driver (with its events and statistics) is available as the
    ``driver`` attribute of the returned mesh.
    """
    if target is not None:
        from dataclasses import replace

        policy = replace(policy, target=float(target))
    driver = ConformingPitcher(mesh, policy, field, solver, None, forest)
    spacetime, report = driver.run()
    spacetime.driver = driver
    spacetime.report = report
    return spacetime


__all__ = [
    "CASE_BELOW",
    "CASE_FREE",
    "CASE_TARGET",
    "CoarsenCluster",
    "ConformingPitcher",
    "TargetState",
    "assign_target_times",
    "choose_height",
    "choose_height_heuristic",
    "cluster_centres",
    "coarsen_scheduler",
    "invariant_holds",
    "run_conforming",
    "smooth_height",
]

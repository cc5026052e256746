"""Symmetric k-center: farthest-first 2-approximation plus the pre-processing
(metric completion of the short-edge graph) and post-processing (merging
clusters that one ball can absorb) that make the output keep stable clusters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metric import Clustering, Instance, leq, metric_completion
from .objectives import farthest_first, make_clustering, opt_radius_candidates, voronoi

log = logging.getLogger(__name__)


@dataclass
class KCenterResult:
    clustering: Clustering
    radius: float
    r: float | None = None
    r_star: float | None = None
    conditions_applied: tuple[bool, bool] = (False, False)
    meta: dict = field(default_factory=dict)

    def meta_line(self) -> str:
        parts = [f"radius={self.radius!r}"]
        if self.r is not None:
            parts.append(f"r={self.r!r}")
        if self.r_star is not None:
            parts.append(f"r_star={self.r_star!r}")
        parts.append(f"condition1={str(self.conditions_applied[0]).lower()}")
        parts.append(f"condition2={str(self.conditions_applied[1]).lower()}")
        for key, value in self.meta.items():
            parts.append(f"{key}={value}")
        return " ".join(parts)


def _as_kcenter(inst: Instance) -> Instance:
    return inst if inst.objective == "k-center" else inst.with_objective("k-center")


def _require_symmetric(inst: Instance) -> None:
    if not inst.symmetric:
        raise ValueError("symmetric k-center routine called on an asymmetric instance")


def _radius(inst: Instance, cl: Clustering) -> float:
    return float(inst.dist[np.asarray(cl.centers)[cl.assign], np.arange(inst.n)].max())


def greedy_2approx(inst: Instance, seed: int = 0, r_star: float | None = None) -> KCenterResult:
    _require_symmetric(inst)
    kc = _as_kcenter(inst)
    first = int(np.random.default_rng(seed).integers(kc.n))
    cl = voronoi(kc, farthest_first(kc.dist, kc.k, first))
    return KCenterResult(cl, cl.cost, r_star=r_star, meta={"first": first})


def isolated_points(inst: Instance, r: float) -> list[int]:
    close = leq(inst.dist, r)
    np.fill_diagonal(close, False)
    return np.flatnonzero(~close.any(axis=1)).tolist()


def condition1_preprocess(inst: Instance, r: float) -> Instance:
    """Drop every pair farther than ``r`` and re-complete the metric.

    Pairs left in different components come back as ``inf``.
    """
    _require_symmetric(inst)
    if r <= 0:
        raise ValueError("condition (1) pre-processing needs r > 0")
    lonely = isolated_points(inst, r)
    if lonely and inst.n > 1:
        log.info("r=%r isolates points %s", r, lonely)
    raw = np.where(leq(inst.dist, r), inst.dist, np.inf)
    completed = metric_completion(raw)
    return inst.with_dist(completed)


def condition1_violations(dist: np.ndarray, r: float) -> list[tuple[int, int]]:
    """Pairs with d(u,v) <= 2r but no w having d(u,w) <= r and d(w,v) <= r."""
    near = leq(dist, r).astype(np.float32)
    two_hop = (near @ near) > 0
    bad = leq(dist, 2 * r) & ~two_hop
    return [tuple(int(x) for x in p) for p in np.argwhere(bad)]


def condition2_merge(inst: Instance, result: KCenterResult) -> KCenterResult:
    """Absorb every group of >= 2 clusters lying inside one ball of the
    current radius, centering the merged cluster at the ball's center.

    Balls are scanned in point-index order and the scan restarts after each
    merge, so the output is deterministic.
    """
    rhat = result.radius
    dist = inst.dist
    centers = list(result.clustering.centers)
    members = [set(c) for c in result.clustering.clusters()]
    merges = 0
    changed = True
    while changed:
        changed = False
        for v in range(inst.n):
            ball = leq(dist[v], rhat)
            captured = [j for j, mem in enumerate(members) if mem and ball[list(mem)].all()]
            if len(captured) < 2:
                continue
            merged = set().union(*(members[j] for j in captured))
            merged.add(v)
            for j, mem in enumerate(members):
                if j not in captured:
                    mem.discard(v)
            keep = captured[0]
            members[keep] = merged
            centers[keep] = v
            for j in reversed(captured[1:]):
                del members[j]
                del centers[j]
            merges += 1
            changed = True
            break
    assign = np.empty(inst.n, dtype=np.int64)
    for pos, mem in enumerate(members):
        assign[list(mem)] = pos
    cl = make_clustering(_as_kcenter(inst), centers, assign)
    meta = dict(result.meta, merges=merges)
    return KCenterResult(cl, _radius(inst, cl), result.r, result.r_star,
                         (result.conditions_applied[0], True), meta)


def recenter(inst: Instance, cl: Clustering) -> Clustering:
    """Move each center to the member minimizing the cluster's radius
    (ties to the current center, then the lowest index)."""
    centers = list(cl.centers)
    for pos, mem in enumerate(cl.clusters()):
        idx = np.array(sorted(mem))
        radii = inst.dist[np.ix_(idx, idx)].max(axis=1)
        best = radii.min()
        if not leq(radii[idx == centers[pos]][0], best):
            centers[pos] = int(idx[np.flatnonzero(radii == best)[0]])
    return make_clustering(_as_kcenter(inst), centers, cl.assign)


def _feasible(kc: Instance, r: float, seed: int):
    pre = condition1_preprocess(kc, r) if r > 0 else kc
    res = greedy_2approx(pre, seed)
    return pre, res, bool(np.isfinite(res.radius) and leq(res.radius, 2 * r))


def solve_robust_kcenter(inst: Instance, r: float | None = None, seed: int = 0,
                         r_star: float | None = None) -> KCenterResult:
    """Greedy 2-approximation run on the condition-(1) metric at the least
    workable radius guess, followed by condition-(2) merging.

    Feasibility holds for every guess at or above the optimal radius, so
    bisection over the sorted candidate radii returns a guess <= r*.
    """
    _require_symmetric(inst)
    kc = _as_kcenter(inst)
    if r is None:
        cands = opt_radius_candidates(kc)
        lo, hi = -1, len(cands) - 1
        found = _feasible(kc, float(cands[hi]), seed)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            attempt = _feasible(kc, float(cands[mid]), seed)
            if attempt[2]:
                hi, found = mid, attempt
            else:
                lo = mid
        r = float(cands[hi])
        pre, res, _ = found
    else:
        pre, res, ok = _feasible(kc, float(r), seed)
        if not ok:
            log.warning("radius guess r=%r is infeasible (greedy radius %r)", r, res.radius)
    res.r = float(r)
    res.conditions_applied = (r > 0, False)
    merged = condition2_merge(pre, res)
    final_pre = recenter(pre, merged.clustering)
    cl = make_clustering(kc, final_pre.centers, final_pre.assign)
    meta = dict(merged.meta, radius_used=repr(_radius(pre, final_pre)))
    return KCenterResult(cl, _radius(kc, cl), float(r), r_star, (True, True), meta)

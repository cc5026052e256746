"""Asymmetric k-center on the threshold digraph.

``vishwanathan_solve`` is the classic two-phase method: pull out
center-capturing vertices (CCVs), then shrink the uncovered remainder by
repeated greedy set cover over 5-hop balls.  ``robust_asym_solve`` changes
which CCVs are picked first (those with CCV-proximity), how much each pick
marks, and freezes the Voronoi tiles of the Phase-I centers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .kcenter import KCenterResult
from .metric import Clustering, Instance, ThresholdDigraph, hop_distances, leq, threshold_digraph
from .objectives import make_clustering, opt_radius_candidates, voronoi

log = logging.getLogger(__name__)

COVER_HOPS = 5


def _as_asym(inst: Instance) -> Instance:
    if inst.objective == "asymmetric-k-center":
        return inst
    return inst.with_objective("asymmetric-k-center")


# --------------------------------------------------------------------------
# vertex properties
# --------------------------------------------------------------------------

def ccv_mask(g: ThresholdDigraph) -> np.ndarray:
    # Γ−(v) ⊆ Γ+(v): no u with u -> v but not v -> u
    return ~(g.adj.T & ~g.adj).any(axis=1)


def is_ccv(g: ThresholdDigraph, v: int) -> bool:
    return bool(g.in_set(v) <= g.out_set(v))


def proximity_mask(g: ThresholdDigraph, inst: Instance, ccv: np.ndarray | None = None) -> np.ndarray:
    """CCV-proximity for every point under the hop-then-length comparison.

    For ``v`` in Γ−(c) the point is one hop from ``c``, so a rival CCV ``c'``
    outside Γ+(c) only competes when it also reaches ``v`` in one hop; then
    the pair (distance, index) decides.
    """
    if ccv is None:
        ccv = ccv_mask(g)
    out = np.zeros(g.n, dtype=bool)
    idx = np.arange(g.n)
    for c in np.flatnonzero(ccv):
        sources = np.flatnonzero(g.adj[:, c])
        sources = sources[sources != c]
        rivals = np.flatnonzero(ccv & ~g.adj[c])
        if len(sources) == 0 or len(rivals) == 0:
            out[c] = True
            continue
        near = g.adj[np.ix_(rivals, sources)]
        mine = inst.dist[c, sources]
        theirs = inst.dist[np.ix_(rivals, sources)]
        beats = (mine < theirs) | ((mine == theirs) & (c < idx[rivals][:, None]))
        out[c] = bool((beats | ~near).all())
    return out


def satisfies_ccv_proximity(g: ThresholdDigraph, inst: Instance, c: int) -> bool:
    return bool(proximity_mask(g, inst)[c])


def satisfies_center_separation(inst: Instance, opt: Clustering, i: int, r: float) -> bool:
    """No point outside cluster ``i`` reaches its center within ``r``."""
    c = opt.centers[i]
    outside = opt.assign != i
    return not bool(leq(inst.dist[outside, c], r).any())


# --------------------------------------------------------------------------
# tie-broken hop metric
# --------------------------------------------------------------------------

def tiebroken_paths(inst: Instance, g: ThresholdDigraph, source: int) -> tuple[np.ndarray, np.ndarray]:
    """Hop counts from ``source`` and the metric length of the
    lexicographically smallest hop-shortest path to each point.

    Unreachable points get ``inf`` hops and fall back to the direct distance.
    """
    hops = hop_distances(g, source)
    length = np.array(inst.dist[source], dtype=np.float64)
    length[source] = 0.0
    rank = np.full(g.n, np.inf)
    rank[source] = 0
    level = 1
    prev = np.array([source])
    while True:
        nodes = np.flatnonzero(hops == level)
        if len(nodes) == 0:
            break
        arcs = g.adj[np.ix_(prev, nodes)]
        pred = prev[np.argmin(np.where(arcs, rank[prev][:, None], np.inf), axis=0)]
        length[nodes] = length[pred] + inst.dist[pred, nodes]
        order = np.lexsort((nodes, rank[pred]))
        rank[nodes[order]] = np.arange(len(nodes))
        prev = nodes
        level += 1
    return hops, length


def tiebroken_assign(inst: Instance, g: ThresholdDigraph, centers: list[int],
                     points: np.ndarray | None = None) -> np.ndarray:
    """Center position for each point by (hops, path length, center index)."""
    if points is None:
        points = np.arange(inst.n)
    keys = [tiebroken_paths(inst, g, c) for c in centers]
    hops = np.stack([h[points] for h, _ in keys])
    length = np.stack([ln[points] for _, ln in keys])
    cidx = np.broadcast_to(np.asarray(centers)[:, None], hops.shape)
    best = np.zeros(len(points), dtype=np.int64)
    for col in range(len(points)):
        best[col] = np.lexsort((cidx[:, col], length[:, col], hops[:, col]))[0]
    return best


# --------------------------------------------------------------------------
# solver state
# --------------------------------------------------------------------------

@dataclass
class AsymSolverState:
    r: float
    graph: ThresholdDigraph
    chosen: list[int] = field(default_factory=list)
    marked: np.ndarray | None = None
    marking_sets: dict[int, frozenset[int]] = field(default_factory=dict)
    selection: list[tuple[int, str]] = field(default_factory=list)
    tiles: dict[int, frozenset[int]] = field(default_factory=dict)
    phase2_rounds: int = 0
    A_sets: list[frozenset[int]] = field(default_factory=list)
    phase2_centers: list[int] = field(default_factory=list)
    feasible: bool = False

    @property
    def centers(self) -> list[int]:
        chosen = set(self.chosen)
        return self.chosen + [a for a in self.phase2_centers if a not in chosen]

    def rederive_marked(self) -> np.ndarray:
        mask = np.zeros(self.graph.n, dtype=bool)
        for pts in self.marking_sets.values():
            mask[list(pts)] = True
        return mask


def _phase2(state: AsymSolverState, k: int) -> None:
    g = state.graph
    reach = g.reach(COVER_HOPS)
    covered = reach[state.chosen].any(axis=0) if state.chosen else np.zeros(g.n, dtype=bool)
    current = ~covered
    state.A_sets = [frozenset(np.flatnonzero(current).tolist())]
    budget = k - len(state.chosen)
    reach_f = reach.astype(np.float32)
    while current.sum() > max(budget, 0):
        if budget <= 0:
            break
        unmarked = current.copy()
        picks: list[int] = []
        while unmarked.any():
            gains = reach_f @ unmarked.astype(np.float32)
            v = int(np.argmax(gains))
            picks.append(v)
            unmarked &= ~reach[v]
        nxt = np.zeros(g.n, dtype=bool)
        nxt[picks] = True
        state.phase2_rounds += 1
        state.A_sets.append(frozenset(picks))
        if nxt.sum() >= current.sum():
            current = nxt
            break
        current = nxt
    state.phase2_centers = np.flatnonzero(current).tolist()
    state.feasible = len(state.centers) <= k


def _phase1(state: AsymSolverState, inst: Instance, robust: bool) -> None:
    g = state.graph
    ccv = ccv_mask(g)
    prox = proximity_mask(g, inst, ccv) if robust else np.zeros(g.n, dtype=bool)
    two_hop = None if robust else g.reach(2)
    marked = np.zeros(g.n, dtype=bool)
    while True:
        open_ccv = ccv & ~marked
        if not open_ccv.any():
            break
        open_prox = prox & ~marked
        if open_prox.any():
            c, why = int(np.flatnonzero(open_prox)[0]), "proximity"
        else:
            c, why = int(np.flatnonzero(open_ccv)[0]), "ccv"
        if robust:
            marks = g.adj[g.adj[:, c]].any(axis=0)
        else:
            marks = two_hop[c]
        state.chosen.append(c)
        state.selection.append((c, why))
        state.marking_sets[c] = frozenset(np.flatnonzero(marks).tolist())
        marked |= marks
    state.marked = marked


def vishwanathan_state(inst: Instance, r: float) -> AsymSolverState:
    state = AsymSolverState(float(r), threshold_digraph(inst, r))
    _phase1(state, inst, robust=False)
    _phase2(state, inst.k)
    return state


def vishwanathan_solve(inst: Instance, r: float) -> tuple[list[int], bool, int]:
    state = vishwanathan_state(inst, r)
    return state.centers, state.feasible, state.phase2_rounds


def robust_asym_state(inst: Instance, r: float) -> AsymSolverState:
    state = AsymSolverState(float(r), threshold_digraph(inst, r))
    _phase1(state, inst, robust=True)
    if state.chosen:
        marked_pts = np.flatnonzero(state.marked)
        owner = tiebroken_assign(inst, state.graph, state.chosen, marked_pts)
        for pos, c in enumerate(state.chosen):
            state.tiles[c] = frozenset(marked_pts[owner == pos].tolist())
    _phase2(state, inst.k)
    return state


def _result(inst: Instance, state: AsymSolverState, assign: np.ndarray | None) -> KCenterResult:
    kc = _as_asym(inst)
    centers = state.centers
    cl = voronoi(kc, centers) if assign is None else make_clustering(kc, centers, assign)
    meta = {
        "rounds": state.phase2_rounds,
        "feasible": str(state.feasible).lower(),
        "phase1": len(state.chosen),
    }
    if state.tiles:
        meta["tiles"] = ",".join(str(len(state.tiles[c])) for c in state.chosen)
    return KCenterResult(cl, cl.cost, state.r, meta=meta)


def plain_asym_solve(inst: Instance, r: float) -> KCenterResult:
    return _result(inst, vishwanathan_state(inst, r), None)


def robust_asym_solve(inst: Instance, r: float) -> tuple[KCenterResult, dict[int, frozenset[int]]]:
    state = robust_asym_state(inst, r)
    centers = state.centers
    assign = tiebroken_assign(inst, state.graph, centers)
    for pos, c in enumerate(state.chosen):
        assign[list(state.tiles[c])] = pos
    return _result(inst, state, assign), dict(state.tiles)


def _solve(inst: Instance, r: float, solver: str) -> KCenterResult:
    if solver == "plain":
        return plain_asym_solve(inst, r)
    if solver == "robust":
        return robust_asym_solve(inst, r)[0]
    raise ValueError(f"solver must be 'plain' or 'robust', got {solver!r}")


def radius_search(inst: Instance, solver: str = "plain", strategy: str = "auto") -> KCenterResult:
    """Least radius guess at which the solver reports feasibility.

    ``scan`` walks the candidates upward.  ``bisect`` assumes feasibility is
    monotone and may return a larger guess when it is not.
    """
    cands = opt_radius_candidates(inst)
    if strategy == "auto":
        strategy = "scan" if inst.n <= 60 else "bisect"
    if strategy == "scan":
        for r in cands:
            res = _solve(inst, float(r), solver)
            if res.meta["feasible"] == "true":
                return res
        raise AssertionError("no feasible radius, even at the largest distance")
    if strategy != "bisect":
        raise ValueError(f"unknown strategy {strategy!r}")
    lo, hi = -1, len(cands) - 1
    best = _solve(inst, float(cands[hi]), solver)
    if best.meta["feasible"] != "true":
        raise AssertionError("no feasible radius, even at the largest distance")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        res = _solve(inst, float(cands[mid]), solver)
        if res.meta["feasible"] == "true":
            hi, best = mid, res
        else:
            lo = mid
    return best


def log_star(n: float) -> int:
    count = 0
    while n > 1:
        n = math.log2(n)
        count += 1
    return count

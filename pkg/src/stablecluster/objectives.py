"""Objective evaluation, Voronoi assignment and the brute-force optimum.

Centers are always input points.  A center ``c`` serves ``v`` at distance
``dist[c, v]``; for symmetric instances that equals ``dist[v, c]``.  Ties
between equally near centers go to the lowest position in the center list.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .metric import RTOL, Clustering, Instance, leq

ORACLE_LIMIT = 10**7
_CHUNK_ELEMS = 4_000_000


class OracleTooLarge(ValueError):
    def __init__(self, count: int, limit: int):
        self.count = count
        super().__init__(f"C(n,k) = {count} subsets exceeds the oracle limit {limit}")


def reduce_cost(objective: str, nearest: np.ndarray) -> np.ndarray:
    """Objective value from per-point service distances (last axis = points)."""
    if objective == "k-median":
        return nearest.sum(axis=-1)
    if objective == "k-means":
        return (nearest * nearest).sum(axis=-1)
    if objective in ("k-center", "asymmetric-k-center"):
        return nearest.max(axis=-1)
    raise ValueError(f"unknown objective {objective!r}")


def service_distances(inst: Instance, centers: Sequence[int], assign: np.ndarray) -> np.ndarray:
    centers = np.asarray(centers, dtype=np.int64)
    return inst.dist[centers[np.asarray(assign)], np.arange(inst.n)]


def objective_value(inst: Instance, centers: Sequence[int], assign: np.ndarray) -> float:
    return float(reduce_cost(inst.objective, service_distances(inst, centers, assign)))


def make_clustering(inst: Instance, centers: Sequence[int], assign: np.ndarray) -> Clustering:
    return Clustering(tuple(centers), assign, objective_value(inst, centers, assign))


def voronoi(inst: Instance, centers: Sequence[int]) -> Clustering:
    centers = [int(c) for c in centers]
    if not centers:
        raise ValueError("need at least one center")
    if len(set(centers)) != len(centers):
        raise ValueError(f"duplicate center indices in {centers}")
    if min(centers) < 0 or max(centers) >= inst.n:
        raise ValueError(f"center index out of range in {centers}")
    assign = np.argmin(inst.dist[centers], axis=0)
    # duplicate points may pull a center onto an earlier position
    assign[centers] = np.arange(len(centers))
    return make_clustering(inst, centers, assign)


def cost_of_centers(inst: Instance, centers: Sequence[int]) -> float:
    return voronoi(inst, centers).cost


def kcenter_radius(inst: Instance, cl: Clustering) -> float:
    return float(service_distances(inst, cl.centers, cl.assign).max())


# --------------------------------------------------------------------------
# subset enumeration
# --------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _all_combos(n: int, k: int) -> np.ndarray:
    arr = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(n), k)),
                      dtype=np.int64, count=math.comb(n, k) * k).reshape(-1, k)
    arr.setflags(write=False)
    return arr


def combo_chunks(n: int, k: int, chunk: int) -> Iterator[np.ndarray]:
    """Lexicographic k-subsets of range(n) as (m, k) arrays."""
    total = math.comb(n, k)
    if total <= 500_000:
        combos = _all_combos(n, k)
        for start in range(0, total, chunk):
            yield combos[start:start + chunk]
        return
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int64)


def _chunk_size(n: int, k: int) -> int:
    return max(1, _CHUNK_ELEMS // max(1, n * k))


def set_costs(dist: np.ndarray, objective: str, sets: np.ndarray) -> np.ndarray:
    """Objective of each center set (rows of ``sets``) under ``dist``."""
    return reduce_cost(objective, dist[sets].min(axis=1))


def strict_containment(dist: np.ndarray, sets: np.ndarray, members: np.ndarray) -> np.ndarray:
    """For each center set: is ``members`` one Voronoi tile under *every* tie
    resolution?  ``members`` is a boolean mask over points."""
    members = np.asarray(members, dtype=bool)
    out = np.zeros(len(sets), dtype=bool)
    step = _chunk_size(dist.shape[0], sets.shape[1] if sets.ndim == 2 else 1)
    for start in range(0, len(sets), step):
        block = sets[start:start + step]
        d = dist[block]                                   # (m, k, n)
        near = d.min(axis=1, keepdims=True)
        tie = leq(d, near)
        inside = tie[:, :, members]
        unique_inside = (inside.sum(axis=1) == 1).all(axis=1)          # (m,)
        owns_all = inside.all(axis=2)                                    # (m, k)
        touches_outside = tie[:, :, ~members].any(axis=2)                # (m, k)
        out[start:start + step] = unique_inside & (owns_all & ~touches_outside).any(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class ExactResult:
    clustering: Clustering
    cost: float
    optimal_sets: np.ndarray        # every center set within tolerance of the optimum
    dist: np.ndarray
    stable_clusters: tuple[bool, ...]   # per cluster of ``clustering``: tile in every optimum

    @property
    def unique(self) -> bool:
        return all(self.stable_clusters)

    def strictly_contains(self, members) -> np.ndarray:
        mask = np.zeros(self.dist.shape[0], dtype=bool)
        mask[list(members)] = True
        return strict_containment(self.dist, self.optimal_sets, mask)


def exact_solve(inst: Instance, limit: int = ORACLE_LIMIT) -> ExactResult:
    """Enumerate all k-subsets of points and keep the cheapest.

    Among (tolerance-)tied subsets the lexicographically smallest wins; all
    tied subsets are kept in ``optimal_sets`` so callers can ask whether the
    optimal partition is unique.
    """
    n, k = inst.n, inst.k
    total = math.comb(n, k)
    if total > limit:
        raise OracleTooLarge(total, limit)
    best = math.inf
    keep: list[np.ndarray] = []
    keep_vals: list[np.ndarray] = []
    for block in combo_chunks(n, k, _chunk_size(n, k)):
        vals = set_costs(inst.dist, inst.objective, block)
        low = float(vals.min())
        if low < best:
            best = low
            pairs = [(s, v) for s, v in zip(keep, keep_vals)]
            keep, keep_vals = [], []
            for s, v in pairs:
                m = leq(v, best)
                if m.any():
                    keep.append(s[m])
                    keep_vals.append(v[m])
        m = leq(vals, best)
        if m.any():
            keep.append(block[m])
            keep_vals.append(vals[m])
    sets = np.concatenate(keep)
    sets.setflags(write=False)
    cl = voronoi(inst, sets[0].tolist())
    stable = []
    for members in cl.clusters():
        mask = np.zeros(n, dtype=bool)
        mask[list(members)] = True
        stable.append(bool(strict_containment(inst.dist, sets, mask).all()))
    return ExactResult(cl, cl.cost, sets, inst.dist, tuple(stable))


def opt_radius_candidates(inst: Instance) -> np.ndarray:
    """Sorted distinct finite pairwise distances (including 0)."""
    vals = inst.dist[np.isfinite(inst.dist)]
    return np.unique(np.concatenate([vals.ravel(), [0.0]]))


def relative_close(a: float, b: float) -> bool:
    return abs(a - b) <= RTOL * max(abs(a), abs(b))


def farthest_first(dist: np.ndarray, k: int, first: int) -> list[int]:
    """Farthest-first traversal; each new center maximizes its distance from
    the chosen set (measured center -> point), ties to the lowest index."""
    chosen = [int(first)]
    near = np.array(dist[first], dtype=np.float64)
    while len(chosen) < k:
        near_masked = near.copy()
        near_masked[chosen] = -np.inf
        nxt = int(np.argmax(near_masked))
        chosen.append(nxt)
        np.minimum(near, dist[nxt], out=near)
    return chosen

"""Swap-based local search for k-median and k-means.

A move replaces ``s <= t`` centers by ``s`` non-centers and is accepted only
if it lowers the cost to at most ``(1 - epsilon/n)`` times the current cost.
The first improving move in enumeration order wins.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .metric import Clustering, Instance
from .objectives import farthest_first, set_costs, voronoi

INIT_MODES = ("first-k", "random", "farthest-first")
LOCAL_SEARCH_OBJECTIVES = ("k-median", "k-means")


@dataclass(frozen=True)
class LocalSearchConfig:
    epsilon: float = 0.2
    t: int | None = None
    max_iterations: int = 10_000
    seed: int = 0
    init: str = "farthest-first"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.t is not None and self.t < 1:
            raise ValueError("swap size t must be >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    @property
    def swap_size(self) -> int:
        if self.t is not None:
            return self.t
        # 1/0.2 is 5.000000000000001 in some spellings; do not round that up to 6
        return max(1, math.ceil(1.0 / self.epsilon - 1e-9))

    def gate(self, n: int) -> float:
        return 1.0 - self.epsilon / n


@dataclass(frozen=True)
class SwapRecord:
    iteration: int
    old_cost: float
    new_cost: float
    removed: tuple[int, ...]
    added: tuple[int, ...]


@dataclass
class LocalSearchResult:
    clustering: Clustering
    trace: list[SwapRecord] = field(default_factory=list)
    converged: bool = True
    initial_cost: float = 0.0


def swap_neighborhood(centers: Sequence[int], t: int, n: int) -> Iterator[tuple[int, ...]]:
    """Center sets reachable by swapping out s centers for s non-centers,
    s = 1..t; ascending s, then lexicographic in (removed, added)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    current = sorted(int(c) for c in centers)
    outside = [v for v in range(n) if v not in set(current)]
    for s in range(1, min(t, len(current), len(outside)) + 1):
        for out in itertools.combinations(current, s):
            keep = [c for c in current if c not in out]
            for inc in itertools.combinations(outside, s):
                yield tuple(sorted(keep + list(inc)))


def neighborhood_size(k: int, n: int, t: int) -> int:
    return sum(math.comb(k, s) * math.comb(n - k, s) for s in range(1, min(t, k, n - k) + 1))


def _neighborhood_blocks(current: list[int], t: int, n: int):
    """Same order as :func:`swap_neighborhood`, one array per removed set."""
    outside = np.array([v for v in range(n) if v not in set(current)], dtype=np.int64)
    for s in range(1, min(t, len(current), len(outside)) + 1):
        ins = np.array(list(itertools.combinations(range(len(outside)), s)), dtype=np.int64)
        added = outside[ins]
        for out in itertools.combinations(current, s):
            keep = np.array([c for c in current if c not in out], dtype=np.int64)
            block = np.concatenate([np.broadcast_to(keep, (len(added), len(keep))), added], axis=1)
            yield out, np.sort(block, axis=1)


def initial_centers(inst: Instance, cfg: LocalSearchConfig) -> list[int]:
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "first-k":
        return list(range(inst.k))
    if cfg.init == "random":
        return sorted(int(c) for c in rng.choice(inst.n, size=inst.k, replace=False))
    first = int(rng.integers(inst.n))
    return sorted(farthest_first(inst.dist, inst.k, first))


def local_search(inst: Instance, cfg: LocalSearchConfig | None = None,
                 init_centers: Sequence[int] | None = None) -> LocalSearchResult:
    cfg = cfg or LocalSearchConfig()
    if inst.objective not in LOCAL_SEARCH_OBJECTIVES:
        raise ValueError(f"local search needs k-median or k-means, not {inst.objective}")
    n, t = inst.n, cfg.swap_size
    centers = sorted(init_centers) if init_centers is not None else initial_centers(inst, cfg)
    current = voronoi(inst, centers)
    result = LocalSearchResult(current, initial_cost=current.cost, converged=False)
    gate = cfg.gate(n)
    for iteration in range(cfg.max_iterations + 1):
        if current.cost == 0:
            result.converged = True
            break
        if iteration == cfg.max_iterations:
            break
        threshold = gate * current.cost
        accepted = None
        for out, block in _neighborhood_blocks(list(current.centers), t, n):
            vals = set_costs(inst.dist, inst.objective, block)
            for j in np.flatnonzero(vals <= threshold):
                # the vectorized pass is only a filter; commit on a fresh evaluation
                cand = voronoi(inst, block[j].tolist())
                if cand.cost <= threshold:
                    accepted = (out, cand)
                    break
            if accepted:
                break
        if accepted is None:
            result.converged = True
            break
        out, cand = accepted
        added = tuple(sorted(set(cand.centers) - set(current.centers)))
        result.trace.append(SwapRecord(iteration, current.cost, cand.cost, tuple(out), added))
        current = cand
    result.clustering = current
    return result


def find_improving_swap(inst: Instance, centers: Sequence[int], epsilon: float, t: int):
    """Scan the whole neighborhood one candidate at a time; return the first
    candidate beating the acceptance gate, or ``None`` at a local optimum."""
    base = voronoi(inst, sorted(centers)).cost
    threshold = (1.0 - epsilon / inst.n) * base
    if base == 0:
        return None
    for cand in swap_neighborhood(centers, t, inst.n):
        if voronoi(inst, cand).cost <= threshold:
            return cand
    return None


def swap_count_bound(initial_cost: float, final_cost: float, epsilon: float, n: int) -> int:
    if final_cost <= 0 or initial_cost <= final_cost:
        return 0 if initial_cost <= final_cost else math.inf
    return math.ceil(math.log(initial_cost / final_cost) / -math.log1p(-epsilon / n) - 1e-9)


def lpr_membership_report(inst: Instance, found: Clustering, opt: Clustering) -> list[bool]:
    """Per optimal cluster: does it appear verbatim among the clusters of ``found``?"""
    if found.n != inst.n or opt.n != inst.n:
        raise ValueError("clusterings and instance disagree on n")
    have = found.partition()
    return [members in have for members in opt.clusters()]

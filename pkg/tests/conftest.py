import heapq
import itertools
import math
from collections import deque

import numpy as np
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


# independent oracles shared by several test modules

def dijkstra_all_pairs(raw):
    """All-pairs shortest paths by running heap Dijkstra from every source."""
    raw = np.asarray(raw, dtype=float)
    n = raw.shape[0]
    out = np.full((n, n), math.inf)
    for s in range(n):
        best = [math.inf] * n
        best[s] = 0.0
        heap = [(0.0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > best[u]:
                continue
            for v in range(n):
                w = raw[u, v]
                if math.isinf(w):
                    continue
                if d + w < best[v]:
                    best[v] = d + w
                    heapq.heappush(heap, (d + w, v))
        out[s] = best
    return out


def bfs_hops(adj, v, x):
    """Points reachable from v in at most x hops along True entries of adj."""
    seen = {v: 0}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        if seen[u] == x:
            continue
        for w in range(len(adj)):
            if adj[u][w] and w not in seen:
                seen[w] = seen[u] + 1
                queue.append(w)
    return frozenset(seen)


def brute_kcenter(dist, k):
    """Plain double loop over all k-subsets; returns (radius, best set)."""
    n = len(dist)
    best, arg = math.inf, None
    for S in itertools.combinations(range(n), k):
        r = max(min(dist[c][v] for c in S) for v in range(n))
        if r < best:
            best, arg = r, S
    return best, arg


def line_dist(xs):
    xs = np.asarray(xs, dtype=float)
    return np.abs(xs[:, None] - xs[None, :])


def random_points(rng, n, dim=2, side=10.0):
    grid = 2.0 ** -10
    pts = np.round(rng.uniform(0, side, (n, dim)) / grid) * grid
    return np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=-1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

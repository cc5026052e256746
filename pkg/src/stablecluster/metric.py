"""Instances, distances, threshold digraphs and clustering comparison.

Distances are held as dense ``float64`` matrices.  For asymmetric instances
``dist[u, v]`` is the distance *from* ``u`` *to* ``v``; a center ``c`` covers
a point ``v`` through ``dist[c, v]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

RTOL = 1e-9

OBJECTIVES = ("k-median", "k-means", "k-center", "asymmetric-k-center")
KCENTER_OBJECTIVES = ("k-center", "asymmetric-k-center")

MAGIC = "STABLECLUSTER v1"


class InstanceError(ValueError):
    """Raised for instances that violate the structural invariants."""


class InstanceFormatError(InstanceError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class TriangleViolation(InstanceError):
    def __init__(self, witness: tuple[int, int, int], dist: np.ndarray):
        u, v, w = witness
        self.witness = witness
        super().__init__(
            f"triangle inequality violated at {witness}: "
            f"d({u},{w})={dist[u, w]!r} > d({u},{v})+d({v},{w})={dist[u, v] + dist[v, w]!r}"
        )


def leq(a, b):
    """``a <= b`` up to the package-wide relative tolerance."""
    return np.asarray(a) <= np.asarray(b) + RTOL * np.abs(b)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    dist: np.ndarray
    k: int
    objective: str = "k-median"
    symmetric: bool = True
    labels: tuple[str, ...] | None = None
    coords: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1] or dist.shape[0] == 0:
            raise InstanceError(f"distance matrix must be square and non-empty, got {dist.shape}")
        n = dist.shape[0]
        if np.isnan(dist).any():
            raise InstanceError("distance matrix contains NaN")
        if (dist < 0).any():
            u, v = np.argwhere(dist < 0)[0]
            raise InstanceError(f"negative distance d({u},{v})={dist[u, v]!r}")
        if (np.diag(dist) != 0).any():
            raise InstanceError("self-distances must be 0")
        if not 1 <= self.k <= n:
            raise InstanceError(f"k={self.k} outside [1, {n}]")
        if self.objective not in OBJECTIVES:
            raise InstanceError(f"unknown objective {self.objective!r}")
        if self.symmetric and not np.array_equal(dist, dist.T):
            raise InstanceError("instance flagged symmetric but dist != dist.T")
        if not self.symmetric and self.objective != "asymmetric-k-center":
            raise InstanceError("only asymmetric-k-center may use an asymmetric distance")
        if self.labels is not None and len(self.labels) != n:
            raise InstanceError("labels length does not match n")
        object.__setattr__(self, "dist", _frozen(dist))
        if self.coords is not None:
            object.__setattr__(self, "coords", _frozen(np.asarray(self.coords, dtype=np.float64)))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def with_dist(self, dist: np.ndarray, **changes) -> "Instance":
        return replace(self, dist=dist, coords=None, **changes)

    def with_objective(self, objective: str) -> "Instance":
        return replace(self, objective=objective)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.k == other.k
            and self.objective == other.objective
            and self.symmetric == other.symmetric
            and self.labels == other.labels
            and np.array_equal(self.dist, other.dist)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Clustering:
    """Ordered centers plus the center *position* each point is assigned to."""

    centers: tuple[int, ...]
    assign: np.ndarray
    cost: float

    def __post_init__(self):
        centers = tuple(int(c) for c in self.centers)
        assign = np.asarray(self.assign, dtype=np.int64)
        if len(set(centers)) != len(centers):
            raise ValueError(f"duplicate centers {centers}")
        if assign.ndim != 1:
            raise ValueError("assign must be one-dimensional")
        if len(assign) and (assign.min() < 0 or assign.max() >= len(centers)):
            raise ValueError("assignment refers to a missing center position")
        for pos, c in enumerate(centers):
            if assign[c] != pos:
                raise ValueError(f"center {c} is not assigned to itself")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "assign", _frozen(assign))
        object.__setattr__(self, "cost", float(self.cost))

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def n(self) -> int:
        return len(self.assign)

    def clusters(self) -> list[frozenset[int]]:
        return [frozenset(np.flatnonzero(self.assign == pos).tolist()) for pos in range(self.k)]

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(c for c in self.clusters() if c)

    def contains_cluster(self, members: Iterable[int]) -> bool:
        return frozenset(members) in self.partition()

    def __eq__(self, other):
        if not isinstance(other, Clustering):
            return NotImplemented
        return (
            self.centers == other.centers
            and np.array_equal(self.assign, other.assign)
            and self.cost == other.cost
        )

    __hash__ = None


# --------------------------------------------------------------------------
# metric checks and completion
# --------------------------------------------------------------------------

def triangle_witness(dist: np.ndarray) -> tuple[int, int, int] | None:
    """First (u, v, w) with d(u,w) > d(u,v) + d(v,w) beyond tolerance, in
    lexicographic order of (u, v, w), or ``None``."""
    d = np.asarray(dist, dtype=np.float64)
    n = d.shape[0]
    bad = np.zeros((n, n, n), dtype=bool) if n <= 60 else None
    if bad is not None:
        via = d[:, :, None] + d[None, :, :]  # via[u, v, w] = d(u,v) + d(v,w)
        with np.errstate(invalid="ignore"):
            bad = ~leq(d[:, None, :], via)
        hits = np.argwhere(bad)
        return tuple(int(x) for x in hits[0]) if len(hits) else None
    best = None
    for v in range(n):
        via = d[:, v, None] + d[None, v, :]
        with np.errstate(invalid="ignore"):
            viol = ~leq(d, via)
        if viol.any():
            u, w = np.argwhere(viol)[0]
            cand = (int(u), v, int(w))
            if best is None or cand < best:
                best = cand
    return best


def check_metric(dist: np.ndarray) -> None:
    witness = triangle_witness(dist)
    if witness is not None:
        raise TriangleViolation(witness, np.asarray(dist))


def metric_completion(raw: np.ndarray) -> np.ndarray:
    """All-pairs shortest directed paths using ``raw`` as arc lengths.

    ``inf`` entries are missing arcs.  Floyd-Warshall, one pivot per step.
    """
    d = np.array(raw, dtype=np.float64, copy=True)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("raw must be a square matrix")
    for m in range(d.shape[0]):
        np.minimum(d, d[:, m, None] + d[None, m, :], out=d)
    return d


# --------------------------------------------------------------------------
# threshold digraph
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ThresholdDigraph:
    """Arc ``u -> v`` iff ``d(u, v) <= r``.

    ``out_set(v)`` is Γ+(v) (points ``v`` reaches), ``in_set(v)`` is Γ−(v).
    """

    r: float
    adj: np.ndarray

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def out_set(self, v: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.adj[v]).tolist())

    def in_set(self, v: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.adj[:, v]).tolist())

    def reach(self, hops: int, direction: str = "out") -> np.ndarray:
        """Boolean matrix; row ``v`` is the hop ball of radius ``hops``."""
        return _reach_matrix(self, hops, direction)


def threshold_digraph(inst: Instance, r: float) -> ThresholdDigraph:
    if r < 0:
        raise ValueError("radius must be non-negative")
    adj = leq(inst.dist, r)
    np.fill_diagonal(adj, True)
    return ThresholdDigraph(float(r), _frozen(adj))


def _check_direction(direction: str) -> None:
    if direction not in ("out", "in"):
        raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")


def gamma_hop(g: ThresholdDigraph, v: int, x: int, direction: str = "out") -> frozenset[int]:
    """Points within ``x`` hops of ``v`` (Γ+_x for ``out``, Γ−_x for ``in``)."""
    _check_direction(direction)
    if x < 0:
        raise ValueError("hop count must be non-negative")
    adj = g.adj if direction == "out" else g.adj.T
    seen = np.zeros(g.n, dtype=bool)
    seen[v] = True
    frontier = seen.copy()
    for _ in range(x):
        nxt = adj[frontier].any(axis=0) & ~seen
        if not nxt.any():
            break
        seen |= nxt
        frontier = nxt
    return frozenset(np.flatnonzero(seen).tolist())


def gamma_hop_set(g: ThresholdDigraph, sources: Iterable[int], x: int, direction: str = "out") -> frozenset[int]:
    out: set[int] = set()
    for v in sources:
        out |= gamma_hop(g, v, x, direction)
    return frozenset(out)


def hop_distances(g: ThresholdDigraph, source: int, direction: str = "out") -> np.ndarray:
    """BFS hop counts from ``source``; unreachable points get ``inf``."""
    _check_direction(direction)
    adj = g.adj if direction == "out" else g.adj.T
    hops = np.full(g.n, np.inf)
    hops[source] = 0
    frontier = np.zeros(g.n, dtype=bool)
    frontier[source] = True
    level = 0
    while frontier.any():
        level += 1
        nxt = adj[frontier].any(axis=0) & np.isinf(hops)
        hops[nxt] = level
        frontier = nxt
    return hops


def _reach_matrix(g: ThresholdDigraph, hops: int, direction: str) -> np.ndarray:
    _check_direction(direction)
    adj = (g.adj if direction == "out" else g.adj.T).astype(np.float32)
    reach = np.eye(g.n, dtype=bool)
    for _ in range(hops):
        grown = (reach.astype(np.float32) @ adj) > 0
        if np.array_equal(grown, reach):
            break
        reach = grown
    return reach


# --------------------------------------------------------------------------
# clustering comparison
# --------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _permutations(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64).reshape(-1, k)


EXHAUSTIVE_K = 8


def overlap_matrix(a: Clustering, b: Clustering) -> np.ndarray:
    ov = np.zeros((a.k, b.k), dtype=np.int64)
    np.add.at(ov, (a.assign, b.assign), 1)
    return ov


def closeness(a: Clustering, b: Clustering, n: int | None = None, method: str = "auto") -> tuple[tuple[int, ...], int]:
    """Best matching σ of clusters of ``a`` onto ``b`` and Σ|A_i \\ B_σ(i)|.

    ``method`` is ``"exhaustive"``, ``"assignment"`` or ``"auto"`` (exhaustive
    up to k = 8).
    """
    n = a.n if n is None else n
    if a.n != n or b.n != n:
        raise ValueError(f"clusterings cover {a.n} and {b.n} points, expected {n}")
    if a.k != b.k:
        raise ValueError(f"clusterings have different k ({a.k} vs {b.k})")
    ov = overlap_matrix(a, b)
    k = a.k
    if method == "auto":
        method = "exhaustive" if k <= EXHAUSTIVE_K else "assignment"
    if method == "exhaustive":
        perms = _permutations(k)
        totals = ov[np.arange(k), perms].sum(axis=1)
        best = int(np.argmax(totals))
        sigma = tuple(int(x) for x in perms[best])
        kept = int(totals[best])
    elif method == "assignment":
        rows, cols = linear_sum_assignment(ov, maximize=True)
        sigma = tuple(int(c) for c in cols[np.argsort(rows)])
        kept = int(ov[rows, cols].sum())
    else:
        raise ValueError(f"unknown method {method!r}")
    return sigma, n - kept


def is_eps_close(a: Clustering, b: Clustering, eps: float) -> bool:
    return closeness(a, b)[1] <= eps * a.n


def cluster_distance(a: Iterable[int], b: Iterable[int]) -> int:
    """|A \\ B| + |B \\ A| for two point sets."""
    a, b = set(a), set(b)
    return len(a - b) + len(b - a)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _header_value(line: str, key: str, lineno: int) -> str:
    prefix = key + ":"
    if not line.startswith(prefix):
        raise InstanceFormatError(f"expected '{prefix} ...', got {line!r}", lineno)
    return line[len(prefix):].strip()


def _parse_int(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise InstanceFormatError(f"expected an integer, got {text!r}", lineno) from None


def _parse_row(line: str, width: int, lineno: int) -> list[float]:
    parts = line.split()
    if len(parts) != width:
        raise InstanceFormatError(f"expected {width} values, got {len(parts)}", lineno)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise InstanceFormatError(f"non-numeric value in {line!r}", lineno) from None


def euclidean_distances(coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return np.minimum(dist, dist.T)


def parse_instance(text: str, objective: str | None = None, validate: bool = True) -> Instance:
    lines = [ln.strip() for ln in text.splitlines()]
    while lines and not lines[-1]:
        lines.pop()
    if not lines or lines[0] != MAGIC:
        raise InstanceFormatError(f"missing '{MAGIC}' header", 1)
    if len(lines) < 6:
        raise InstanceFormatError("truncated header", len(lines))
    mode = _header_value(lines[1], "mode", 2)
    if mode not in ("matrix", "euclidean"):
        raise InstanceFormatError(f"unknown mode {mode!r}", 2)
    sym_text = _header_value(lines[2], "symmetric", 3)
    if sym_text not in ("true", "false"):
        raise InstanceFormatError(f"symmetric must be true or false, got {sym_text!r}", 3)
    symmetric = sym_text == "true"
    n = _parse_int(_header_value(lines[3], "n", 4), 4)
    k = _parse_int(_header_value(lines[4], "k", 5), 5)
    pos = 5
    dim = None
    if mode == "euclidean":
        dim = _parse_int(_header_value(lines[5], "dim", 6), 6)
        if not symmetric:
            raise InstanceFormatError("euclidean instances must be symmetric", 3)
        pos = 6
    if n < 1:
        raise InstanceFormatError("n must be positive", 4)
    if pos >= len(lines) or lines[pos] != "data:":
        raise InstanceFormatError("expected 'data:'", pos + 1)
    rows = lines[pos + 1:]
    if len(rows) != n:
        raise InstanceFormatError(f"expected {n} data rows, found {len(rows)}", pos + 2)
    width = n if mode == "matrix" else dim
    data = np.array([_parse_row(r, width, pos + 2 + i) for i, r in enumerate(rows)], dtype=np.float64)
    coords = None
    if mode == "euclidean":
        coords = data
        dist = euclidean_distances(coords)
    else:
        dist = data
    if objective is None:
        objective = "k-median" if symmetric else "asymmetric-k-center"
    inst = Instance(dist=dist, k=k, objective=objective, symmetric=symmetric, coords=coords)
    if validate:
        check_metric(inst.dist)
    return inst


def load_instance(path: str | Path, objective: str | None = None, validate: bool = True) -> Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"), objective=objective, validate=validate)


def format_instance(inst: Instance) -> str:
    lines = [MAGIC]
    if inst.coords is not None and inst.symmetric:
        lines += ["mode: euclidean", "symmetric: true", f"n: {inst.n}", f"k: {inst.k}",
                  f"dim: {inst.coords.shape[1]}", "data:"]
        lines += [" ".join(_fmt(x) for x in row) for row in inst.coords]
    else:
        lines += ["mode: matrix", f"symmetric: {'true' if inst.symmetric else 'false'}",
                  f"n: {inst.n}", f"k: {inst.k}", "data:"]
        lines += [" ".join(_fmt(x) for x in row) for row in inst.dist]
    return "\n".join(lines) + "\n"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(format_instance(inst), encoding="utf-8")


def format_clustering(cl: Clustering, extra: dict[str, str] | None = None) -> str:
    lines = [
        f"cost: {_fmt(cl.cost)}",
        "centers: " + " ".join(str(c) for c in cl.centers),
        "assign: " + " ".join(str(int(a)) for a in cl.assign),
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def save_clustering(cl: Clustering, path: str | Path, extra: dict[str, str] | None = None) -> None:
    Path(path).write_text(format_clustering(cl, extra), encoding="utf-8")


def parse_clustering(text: str) -> tuple[Clustering, dict[str, str]]:
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise InstanceFormatError(f"expected 'key: value', got {line!r}", lineno)
        fields[key.strip()] = value.strip()
    for key in ("cost", "centers", "assign"):
        if key not in fields:
            raise InstanceFormatError(f"clustering file lacks '{key}:'")
    try:
        cost = float(fields.pop("cost"))
        centers = tuple(int(x) for x in fields.pop("centers").split())
        assign = np.array([int(x) for x in fields.pop("assign").split()], dtype=np.int64)
    except ValueError as exc:
        raise InstanceFormatError(f"malformed clustering file: {exc}") from None
    try:
        return Clustering(centers, assign, cost), fields
    except ValueError as exc:
        raise InstanceFormatError(str(exc)) from None


def load_clustering(path: str | Path) -> tuple[Clustering, dict[str, str]]:
    return parse_clustering(Path(path).read_text(encoding="utf-8"))


def partition_of(assign: Sequence[int]) -> frozenset[frozenset[int]]:
    groups: dict[int, set[int]] = {}
    for v, a in enumerate(assign):
        groups.setdefault(int(a), set()).add(v)
    return frozenset(frozenset(g) for g in groups.values())

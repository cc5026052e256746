"""Seeded instance generators.

Points live on a 2^-10 grid and distances are L1, so every distance is an
exact double and file round-trips are lossless.  Directed instances add a
potential-difference term, d(u,v) = |u-v|_1 + mu * max(0, rho(u) - rho(v)),
which keeps the directed triangle inequality without any completion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .asym import ccv_mask, proximity_mask, satisfies_center_separation
from .metric import Clustering, Instance, metric_completion, threshold_digraph
from .objectives import ExactResult, OracleTooLarge, exact_solve, make_clustering
from .stability import probe_all_lpr, probe_all_lpr_eps

log = logging.getLogger(__name__)

GRID = 2.0 ** -10


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    seed: int = 0
    k: int = 3
    sizes: tuple[int, ...] = (4, 4, 4)
    intra_radius: float = 1.0
    separation: float = 10.0
    asymmetry: float | None = None       # skew factor lambda; None means symmetric
    noise: int = 0
    objective: str | None = None
    alpha: float = 2.0
    eps: float | None = None
    certify: str = "lpr"                 # lpr | lpr-eps | none
    dim: int = 2
    max_retries: int = 6

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) != self.k:
            raise ValueError(f"{len(sizes)} sizes given for k={self.k}")
        if min(sizes) < 1:
            raise ValueError("cluster sizes must be >= 1")
        if self.separation <= 2:
            raise ValueError("separation must exceed 2")
        if self.intra_radius <= 0:
            raise ValueError("intra_radius must be positive")
        if self.asymmetry is not None and self.asymmetry < 1:
            raise ValueError("asymmetry factor must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.certify not in ("lpr", "lpr-eps", "none"):
            raise ValueError(f"unknown certification {self.certify!r}")
        if self.eps is not None:
            n = self.n
            if min(sizes) <= 2 * self.eps * n:
                raise ValueError(f"cluster sizes must exceed 2*eps*n = {2 * self.eps * n}")
        elif self.certify == "lpr-eps":
            raise ValueError("lpr-eps certification needs eps")

    @property
    def noise_centers(self) -> int:
        return math.ceil(self.noise / 3)

    @property
    def n(self) -> int:
        return sum(self.sizes) + self.noise

    @property
    def total_k(self) -> int:
        return self.k + self.noise_centers

    @property
    def symmetric(self) -> bool:
        return self.asymmetry is None

    def resolved_objective(self) -> str:
        if self.objective is not None:
            return self.objective
        return "k-center" if self.symmetric else "asymmetric-k-center"


@dataclass
class Generated:
    instance: Instance
    planted: Clustering
    r_star: float
    flags: tuple[bool, ...]
    separation: float
    attempts: int
    exact: ExactResult | None = None


def snap(x):
    return np.round(np.asarray(x, dtype=np.float64) / GRID) * GRID


def l1_distances(coords: np.ndarray) -> np.ndarray:
    return np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=-1)


def skewed(base: np.ndarray, rho: np.ndarray, lam: float) -> np.ndarray:
    mu = snap(lam - 1.0)
    return base + mu * np.maximum(0.0, rho[:, None] - rho[None, :])


def _place(rng: np.random.Generator, count: int, gap: float, dim: int) -> np.ndarray:
    side = gap * max(2.0, 2 * count ** (1.0 / dim))
    out: list[np.ndarray] = []
    tries = 0
    while len(out) < count:
        c = snap(rng.uniform(0, side, dim))
        if all(np.abs(c - o).sum() > gap for o in out):
            out.append(c)
            tries = 0
        else:
            tries += 1
            if tries > 2000:
                side *= 1.5
                tries = 0
    return np.array(out)


def _ball(rng: np.random.Generator, center: np.ndarray, count: int, r: float) -> list[np.ndarray]:
    pts = [center]
    while len(pts) < count:
        p = snap(center + rng.uniform(-r, r, center.shape[0]))
        if np.abs(p - center).sum() <= r:
            pts.append(p)
    return pts


def _cycle(m: int, r: float) -> np.ndarray:
    idx = np.arange(m)
    gap = np.abs(idx[:, None] - idx[None, :])
    return r * np.minimum(gap, m - gap).astype(np.float64)


def _build(spec: GenSpec, sep: float, rng: np.random.Generator):
    r = float(snap(spec.intra_radius))
    gap = (sep + 2) * r + GRID
    anchors = _place(rng, spec.k + (1 if spec.noise else 0), gap + (spec.noise * r if spec.noise else 0), spec.dim)
    coords, owner, rho = [], [], []
    for j, size in enumerate(spec.sizes):
        for p in _ball(rng, anchors[j], size, r):
            coords.append(p)
            owner.append(j)
            rho.append(np.abs(p - anchors[j]).sum())
    coords = np.array(coords)
    n_stable = len(coords)
    dist = l1_distances(coords)
    if spec.noise:
        m = spec.noise
        far = anchors[-1]
        h = float(snap(max(r, r * (m // 2) / 2)))
        to_far = np.abs(coords - far).sum(axis=1) + h
        full = np.zeros((n_stable + m, n_stable + m))
        full[:n_stable, :n_stable] = dist
        full[:n_stable, n_stable:] = to_far[:, None]
        full[n_stable:, :n_stable] = to_far[None, :]
        full[n_stable:, n_stable:] = _cycle(m, r)
        dist = full
        owner += [-1] * m
        rho += [0.0] * m
    rho = np.array(rho)
    if spec.asymmetry is not None:
        dist = skewed(dist, rho, spec.asymmetry)
    perm = rng.permutation(len(owner))
    dist = dist[np.ix_(perm, perm)]
    owner = np.array(owner)[perm]
    return dist, owner


def _planted_groups(owner: np.ndarray, k: int) -> list[frozenset[int]]:
    return [frozenset(np.flatnonzero(owner == j).tolist()) for j in range(k)]


def _certify(spec: GenSpec, inst: Instance, ex: ExactResult) -> list[bool]:
    if spec.certify == "none":
        return [True] * inst.k
    if spec.certify == "lpr":
        verdicts = probe_all_lpr(inst, spec.alpha, ex)
    else:
        verdicts = probe_all_lpr_eps(inst, spec.alpha, spec.eps, ex)
    flags = [v.status == "not-refuted" for v in verdicts]
    if not spec.symmetric:
        opt = ex.clustering
        g = threshold_digraph(inst, ex.cost)
        prox = proximity_mask(g, inst, ccv_mask(g))
        for i, c in enumerate(opt.centers):
            flags[i] = flags[i] and bool(prox[c]) and satisfies_center_separation(inst, opt, i, ex.cost)
    return flags


def generate(spec: GenSpec) -> Generated:
    """Planted clusters (plus an optional ambiguous noise clump), verified
    against the exact oracle and probe-certified; widens the separation and
    retries when certification fails."""
    objective = spec.resolved_objective()
    sep = spec.separation
    problems = []
    for attempt in range(spec.max_retries + 1):
        rng = np.random.default_rng([spec.seed, attempt])
        dist, owner = _build(spec, sep, rng)
        inst = Instance(dist, spec.total_k, objective, symmetric=spec.symmetric)
        groups = _planted_groups(owner, spec.k)
        try:
            ex = exact_solve(inst)
        except OracleTooLarge:
            if spec.certify != "none":
                raise
            ex = None
        if ex is None:
            assign = np.array(owner)
            centers = [min(g) for g in groups]
            cl = make_clustering(inst, centers, assign)
            return Generated(inst, cl, float("nan"), tuple([True] * spec.k), sep, attempt + 1)
        opt = ex.clustering
        clusters = opt.clusters()
        found = all(g in clusters for g in groups)
        stable_idx = [clusters.index(g) for g in groups] if found else []
        unique = found and all(ex.stable_clusters[i] for i in stable_idx)
        if unique:
            flags = _certify(spec, inst, ex)
            if all(flags[i] for i in stable_idx):
                if attempt:
                    log.info("seed %d certified after %d retries at separation %g", spec.seed, attempt, sep)
                return Generated(inst, opt, ex.cost, tuple(flags), sep, attempt + 1, ex)
            reason = f"probe refuted clusters {[i for i in stable_idx if not flags[i]]}"
        else:
            reason = "oracle optimum differs from the planted clusters or is not unique"
        problems.append(f"attempt {attempt} separation {sep:g}: {reason}")
        log.warning("seed %d attempt %d at separation %g failed: %s; widening", spec.seed, attempt, sep, reason)
        sep *= 1.5
    raise GenerationError("could not certify planted instance:\n  " + "\n  ".join(problems))


def gen_planted(spec: GenSpec) -> tuple[Instance, Clustering, float]:
    if spec.noise:
        spec = replace(spec, noise=0)
    out = generate(spec)
    return out.instance, out.planted, out.r_star


def gen_mixed(spec: GenSpec) -> tuple[Instance, Clustering, tuple[bool, ...]]:
    """Planted clusters plus the noise clump; with no noise this is the
    planted instance with its certification flags."""
    out = generate(spec)
    return out.instance, out.planted, out.flags


def embed_approx_stable(inst: Instance, alpha: float, eps: float) -> tuple[Instance, int]:
    """Append ceil(n/eps) far points, each needing its own center."""
    if not inst.symmetric:
        raise ValueError("embedding is defined for symmetric instances")
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = inst.n
    extra = math.ceil(n / eps - 1e-9)
    top = float(inst.dist.max())
    far = 2 * alpha * n * (top if top > 0 else 1.0)
    size = n + extra
    dist = np.full((size, size), far)
    dist[:n, :n] = inst.dist
    np.fill_diagonal(dist, 0.0)
    k2 = inst.k + extra
    return Instance(dist, k2, inst.objective, symmetric=True), k2


def random_metric(seed: int, n: int, k: int, objective: str = "k-median", dim: int = 2,
                  side: float = 10.0) -> Instance:
    rng = np.random.default_rng(seed)
    coords = snap(rng.uniform(0, side, (n, dim)))
    return Instance(l1_distances(coords), k, objective)


def random_asymmetric(seed: int, n: int, k: int, lam: float = 3.0, dim: int = 2,
                      side: float = 10.0) -> Instance:
    rng = np.random.default_rng(seed)
    coords = snap(rng.uniform(0, side, (n, dim)))
    rho = snap(rng.uniform(0, side / 4, n))
    dist = skewed(l1_distances(coords), rho, lam)
    return Instance(dist, k, "asymmetric-k-center", symmetric=False)


def random_digraph_metric(seed: int, n: int, k: int, density: float = 0.1) -> Instance:
    """Shortest-path distances of a sparse random digraph.  A directed
    Hamiltonian cycle of long arcs keeps every pair reachable."""
    rng = np.random.default_rng(seed)
    raw = np.where(rng.random((n, n)) < density, snap(rng.uniform(1, 10, (n, n))), np.inf)
    perm = rng.permutation(n)
    raw[perm, np.roll(perm, -1)] = snap(rng.uniform(5, 20, n))
    np.fill_diagonal(raw, 0.0)
    return Instance(metric_completion(raw), k, "asymmetric-k-center", symmetric=False)

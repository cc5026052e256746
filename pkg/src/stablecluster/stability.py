"""Structured perturbations and stability detectors.

The probes here only ever *refute*: they search a finite family of
perturbations (scaled distances with a few capped or kept pairs) and report
one under which the optimum loses a cluster.  "not-refuted" means the family
had no such witness, which is not a certificate of resilience.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .asym import ccv_mask, proximity_mask, satisfies_center_separation
from .metric import (
    KCENTER_OBJECTIVES,
    Clustering,
    Instance,
    leq,
    metric_completion,
    threshold_digraph,
    triangle_witness,
)
from .objectives import ExactResult, combo_chunks, exact_solve

RULES = ("min", "alpha", "keep")


class PerturbationError(ValueError):
    def __init__(self, message: str, pair: tuple[int, int] | None = None):
        self.pair = pair
        super().__init__(message)


@dataclass(frozen=True)
class PairRule:
    """Override ``d''(source, t)`` for every ``t`` in ``targets``.

    ``min``: min(alpha*r*, alpha*d) where d <= alpha*r*, else alpha*d.
    ``alpha``: alpha*d.  ``keep``: d unchanged.
    """

    source: int
    targets: tuple[int, ...]
    rule: str = "min"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown cap rule {self.rule!r}")
        object.__setattr__(self, "targets", tuple(sorted(int(t) for t in self.targets)))


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    alpha: float
    exceptions: tuple[PairRule, ...]
    completed: np.ndarray
    raw: np.ndarray
    base: str = "alpha"
    r_star: float | None = None
    label: str = ""

    def instance(self, inst: Instance) -> Instance:
        return inst.with_dist(self.completed)

    def describe(self) -> str:
        parts = [f"{e.rule}:{e.source}->{'/'.join(map(str, e.targets))}" for e in self.exceptions]
        return f"{self.label} alpha={self.alpha!r} base={self.base} " + " ".join(parts)


def _raw_matrix(inst: Instance, alpha: float, exceptions: Sequence[PairRule],
                r_star: float | None, base: str) -> np.ndarray:
    d = inst.dist
    if base == "alpha":
        raw = alpha * d
    elif base == "identity":
        raw = np.array(d, dtype=np.float64)
    else:
        raise ValueError(f"unknown base {base!r}")
    for ex in exceptions:
        t = np.array(ex.targets, dtype=np.int64)
        sides = [(np.full(len(t), ex.source), t)]
        if inst.symmetric:
            sides.append((t, np.full(len(t), ex.source)))
        for a, b in sides:
            orig = d[a, b]
            if ex.rule == "keep":
                val = orig
            elif ex.rule == "alpha":
                val = alpha * orig
            else:
                if r_star is None:
                    raise ValueError("the min cap needs r_star")
                cap = alpha * r_star
                val = np.where(leq(orig, cap), np.minimum(cap, alpha * orig), alpha * orig)
            raw[a, b] = val
    np.fill_diagonal(raw, 0.0)
    return raw


def perturbation_violation(d: np.ndarray, completed: np.ndarray, alpha: float) -> tuple[int, int] | None:
    bad = ~leq(d, completed) | ~leq(completed, alpha * d)
    if bad.any():
        u, v = np.argwhere(bad)[0]
        return int(u), int(v)
    return None


def build_capped_perturbation(inst: Instance, alpha: float, exceptions: Sequence[PairRule],
                              r_star: float | None = None, base: str = "alpha",
                              check_cost: bool = False, label: str = "") -> PerturbationSpec:
    """Scale (or keep) all distances, apply the exception rules, complete.

    With ``check_cost`` the exact k-center cost of the result must equal
    alpha * r_star; that only follows when every pair is min-capped or
    alpha-scaled.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    needs_rstar = any(e.rule == "min" for e in exceptions) or check_cost
    if r_star is None and needs_rstar:
        r_star = exact_solve(inst.with_objective(_kc_objective(inst))).cost
    raw = _raw_matrix(inst, alpha, exceptions, r_star, base)
    completed = metric_completion(raw)
    bad = perturbation_violation(inst.dist, completed, alpha)
    if bad is not None:
        raise PerturbationError(f"not an alpha-perturbation at pair {bad}", bad)
    tri = triangle_witness(completed)
    if tri is not None:
        raise PerturbationError(f"completion violates the triangle inequality at {tri}")
    spec = PerturbationSpec(float(alpha), tuple(exceptions), completed, raw, base,
                            None if r_star is None else float(r_star), label)
    if check_cost:
        cost = exact_solve(spec.instance(inst).with_objective(_kc_objective(inst))).cost
        want = alpha * r_star
        if not (leq(cost, want) and leq(want, cost)):
            raise PerturbationError(f"perturbed optimum {cost!r} differs from alpha*r* = {want!r}")
    return spec


def _kc_objective(inst: Instance) -> str:
    return "k-center" if inst.symmetric else "asymmetric-k-center"


def dmetric_violations(inst: Instance, spec: PerturbationSpec, r_star: float) -> list[tuple[int, int]]:
    """Pairs with d >= r* whose perturbed distance fell below alpha*r*."""
    far = leq(r_star, inst.dist)
    low = ~leq(spec.alpha * r_star, spec.completed)
    return [tuple(int(x) for x in p) for p in np.argwhere(far & low)]


def hit_perturbation(inst: Instance, C: Sequence[int], alpha: float, r_star: float) -> PerturbationSpec:
    everyone = tuple(range(inst.n))
    rules = [PairRule(int(s), everyone, "min") for s in C]
    return build_capped_perturbation(inst, alpha, rules, r_star, label="hit")


def check_hits(inst: Instance, C: Sequence[int], beta: int, gamma: float, r_star: float) -> bool:
    """Every point has >= beta members of C within gamma*r* (measured from C)."""
    C = list(C)
    if beta <= 0:
        return True
    if len(C) < beta:
        return False
    counts = leq(inst.dist[C], gamma * r_star).sum(axis=0)
    return bool((counts >= beta).all())


# --------------------------------------------------------------------------
# verdicts
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    status: str
    cluster: int
    witness: PerturbationSpec | None = None
    detail: str = ""

    @property
    def refuted(self) -> bool:
        return self.status == "refuted"


def _members_mask(n: int, members) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[list(members)] = True
    return mask


def _tie_resolutions(dist: np.ndarray, sets: np.ndarray) -> list[np.ndarray]:
    """Assignments (m, n) with ties to the lowest and to the highest position."""
    d = dist[sets]
    low = np.argmin(d, axis=1)
    high = d.shape[1] - 1 - np.argmin(d[:, ::-1, :], axis=1)
    out = []
    for assign in (low, high):
        assign = assign.copy()
        rows = np.arange(len(sets))[:, None]
        assign[rows, sets] = np.arange(sets.shape[1])[None, :]
        out.append(assign)
    return out


def _has_close_cluster(assign: np.ndarray, k: int, members: np.ndarray, eps: float) -> np.ndarray:
    n = assign.shape[1]
    onehot = assign[:, :, None] == np.arange(k)[None, None, :]        # (m, n, k)
    size = onehot.sum(axis=1)
    inter = onehot[:, members, :].sum(axis=1)
    symdiff = size + members.sum() - 2 * inter
    return (symdiff <= eps * n + 1e-9).any(axis=1)


def loses_cluster(witness_opt: ExactResult, members, eps: float | None = None) -> bool:
    """Does some optimal clustering under the witness lack the cluster?

    Exact clusters use every tie resolution; eps-closeness checks the two
    extreme tie resolutions of each optimal center set.
    """
    n = witness_opt.dist.shape[0]
    mask = _members_mask(n, members)
    if eps is None:
        return not bool(witness_opt.strictly_contains(members).all())
    sets = witness_opt.optimal_sets
    k = sets.shape[1]
    for assign in _tie_resolutions(witness_opt.dist, sets):
        if not _has_close_cluster(assign, k, mask, eps).all():
            return True
    return False


def verify_witness(inst: Instance, spec: PerturbationSpec, members, eps: float | None = None) -> bool:
    """Independent re-check: valid perturbation, metric, and cluster lost."""
    if perturbation_violation(inst.dist, spec.completed, spec.alpha) is not None:
        return False
    if triangle_witness(spec.completed) is not None:
        return False
    return loses_cluster(exact_solve(spec.instance(inst)), members, eps)


# --------------------------------------------------------------------------
# witness families
# --------------------------------------------------------------------------

def capped_family(inst: Instance, alpha: float, r_star: float,
                  clusters: list[frozenset[int]]) -> Iterator[tuple[str, PairRule]]:
    """One new center ``v`` capped to a target set: a cluster, two clusters,
    or a cluster plus one outside point.  Only sources within alpha*r* of
    the whole target are tried."""
    reach = leq(inst.dist, alpha * r_star)
    targets: list[tuple[str, frozenset[int]]] = []
    k = len(clusters)
    for j in range(k):
        targets.append((f"cluster {j}", clusters[j]))
    for j, l in itertools.combinations(range(k), 2):
        targets.append((f"clusters {j}+{l}", clusters[j] | clusters[l]))
    for j in range(k):
        for p in range(inst.n):
            if p not in clusters[j]:
                targets.append((f"cluster {j}+point {p}", clusters[j] | {p}))
    for label, T in targets:
        t = np.array(sorted(T))
        for v in np.flatnonzero(reach[:, t].all(axis=1)):
            yield label, PairRule(int(v), tuple(t.tolist()), "min")


def favor_family(inst: Instance, centers: Sequence[int]) -> Iterator[tuple[str, list[PairRule]]]:
    """Swap one center for ``v`` and keep every point's distance to its new
    center while scaling everything else."""
    centers = list(centers)
    for j in range(len(centers)):
        for v in range(inst.n):
            if v in centers:
                continue
            Y = centers[:j] + [v] + centers[j + 1:]
            own = np.argmin(inst.dist[Y], axis=0)
            rules = [PairRule(y, tuple(np.flatnonzero(own == pos).tolist()), "keep")
                     for pos, y in enumerate(Y)]
            yield f"swap {centers[j]}->{v}", rules


def boundary_family(inst: Instance, alpha: float, opt: Clustering) -> Iterator[tuple[str, list[PairRule]]]:
    """Stretch a center's distance to points that would then prefer another
    center, all movable points at once and then one at a time."""
    centers = list(opt.centers)
    d = inst.dist
    for x, c in enumerate(centers):
        others = [cc for cc in centers if cc != c]
        if not others:
            continue
        members = np.flatnonzero(opt.assign == x)
        members = members[members != c]
        rival = d[others][:, members].min(axis=0)
        movable = members[alpha * d[c, members] > rival]
        if len(movable) == 0:
            continue
        yield f"boundary {x} all", [PairRule(c, tuple(movable.tolist()), "alpha")]
        if len(movable) > 1:
            for s in movable:
                yield f"boundary {x} point {s}", [PairRule(c, (int(s),), "alpha")]


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

@dataclass
class _Context:
    inst: Instance
    exact: ExactResult
    clusters: list[frozenset[int]]
    r_star: float | None


def _context(inst: Instance, exact: ExactResult | None) -> _Context:
    if exact is None:
        exact = exact_solve(inst)
    r_star = None
    if inst.objective in KCENTER_OBJECTIVES:
        r_star = exact.cost
    return _Context(inst, exact, exact.clustering.clusters(), r_star)


def _witnesses(ctx: _Context, alpha: float, with_boundary: bool) -> Iterator[PerturbationSpec]:
    inst = ctx.inst
    if inst.objective in KCENTER_OBJECTIVES:
        for label, rule in capped_family(inst, alpha, ctx.r_star, ctx.clusters):
            yield build_capped_perturbation(inst, alpha, [rule], ctx.r_star, label=label)
    else:
        for label, rules in favor_family(inst, ctx.exact.clustering.centers):
            yield build_capped_perturbation(inst, alpha, rules, label=label)
    if with_boundary:
        for label, rules in boundary_family(inst, alpha, ctx.exact.clustering):
            yield build_capped_perturbation(inst, alpha, rules, base="identity", label=label)


def _scan(ctx: _Context, alpha: float, targets: list[int], eps: float | None) -> dict[int, Verdict]:
    out: dict[int, Verdict] = {}
    pending = []
    for i in targets:
        if ctx.inst.k == 1 or (eps is not None and eps >= 1):
            out[i] = Verdict("not-refuted", i, detail="trivial")
        elif not ctx.exact.stable_clusters[i]:
            out[i] = Verdict("degenerate", i, detail="optimal partition not unique for this cluster")
        else:
            pending.append(i)
    if pending:
        for spec in _witnesses(ctx, alpha, with_boundary=eps is not None):
            res = exact_solve(spec.instance(ctx.inst))
            for i in list(pending):
                if loses_cluster(res, ctx.clusters[i], eps):
                    out[i] = Verdict("refuted", i, spec, spec.label)
                    pending.remove(i)
            if not pending:
                break
    for i in pending:
        out[i] = Verdict("not-refuted", i)
    return out


def probe_lpr(inst: Instance, alpha: float, i: int, exact: ExactResult | None = None) -> Verdict:
    ctx = _context(inst, exact)
    return _scan(ctx, alpha, [i], None)[i]


def probe_all_lpr(inst: Instance, alpha: float, exact: ExactResult | None = None) -> list[Verdict]:
    ctx = _context(inst, exact)
    found = _scan(ctx, alpha, list(range(len(ctx.clusters))), None)
    return [found[i] for i in range(len(ctx.clusters))]


def probe_lpr_eps(inst: Instance, alpha: float, eps: float, i: int,
                  exact: ExactResult | None = None) -> Verdict:
    ctx = _context(inst, exact)
    return _scan(ctx, alpha, [i], eps)[i]


def probe_all_lpr_eps(inst: Instance, alpha: float, eps: float,
                      exact: ExactResult | None = None) -> list[Verdict]:
    ctx = _context(inst, exact)
    found = _scan(ctx, alpha, list(range(len(ctx.clusters))), eps)
    return [found[i] for i in range(len(ctx.clusters))]


def neighbor_clusters(inst: Instance, clusters: list[frozenset[int]], i: int, r_star: float) -> list[int]:
    """Clusters with a point within r* of cluster ``i`` (either direction)."""
    mine = sorted(clusters[i])
    out = []
    for j, other in enumerate(clusters):
        if j == i:
            continue
        theirs = sorted(other)
        block = inst.dist[np.ix_(mine, theirs)]
        back = inst.dist[np.ix_(theirs, mine)]
        if leq(block, r_star).any() or leq(back, r_star).any():
            out.append(j)
    return out


def probe_slpr(inst: Instance, alpha: float, i: int, exact: ExactResult | None = None) -> Verdict:
    ctx = _context(inst, exact)
    group = [i] + neighbor_clusters(inst, ctx.clusters, i, ctx.r_star)
    found = _scan(ctx, alpha, group, None)
    for j in group:
        if found[j].status != "not-refuted":
            return Verdict(found[j].status, i, found[j].witness, f"via cluster {j}: {found[j].detail}")
    return Verdict("not-refuted", i)


# --------------------------------------------------------------------------
# detectors
# --------------------------------------------------------------------------

def _capture_exceptions(inst: Instance, opt: Clustering, i: int, j: int,
                        skip: set[int], r_star: float) -> int:
    d = inst.dist
    ci = opt.centers[i]
    pts = np.flatnonzero(opt.assign == j)
    bad = ~leq(d[ci, pts], r_star)
    for x, cx in enumerate(opt.centers):
        if x in skip:
            continue
        bad |= ~(d[ci, pts] < d[cx, pts])
    return int(bad.sum())


def detect_ccc(inst: Instance, opt: Clustering, eps: float, r_star: float | None = None):
    """(i, j) with c_i capturing C_j, and (i, j, l) capturing while
    discounting c_l.  All but eps*n points of C_j must be within r* of c_i
    and strictly closer to c_i than to every other counted center."""
    if r_star is None:
        r_star = float(inst.dist[np.asarray(opt.centers)[opt.assign], np.arange(inst.n)].max())
    limit = eps * inst.n + 1e-9
    k = opt.k
    ccc, ccc2 = [], []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            if _capture_exceptions(inst, opt, i, j, {i, j}, r_star) <= limit:
                ccc.append((i, j))
            for l in range(k):
                if l in (i, j):
                    continue
                if _capture_exceptions(inst, opt, i, j, {i, j, l}, r_star) <= limit:
                    ccc2.append((i, j, l))
    return ccc, ccc2


def uniform_approx_violation(inst: Instance, X: Sequence[int], alpha: float, mode: str = "exhaustive",
                             m: int = 1000, seed: int = 0, limit: int = 10**6):
    """First center set Y breaking the inequality that makes X optimal
    under the 'keep X, scale the rest by alpha' perturbation, or None.

    With A1..A4 the four classes of points by whether their X-center lies
    in Y and their Y-center lies in X, the inequality is
        sum_{A2,A3,A4} d(v,X) <= sum_{A2} min(d(v,X), a d(v,Y)) + a sum_{A3,A4} d(v,Y).
    k-means uses squared distances as the distance.
    """
    if inst.objective not in ("k-median", "k-means"):
        raise ValueError("uniform-approximation condition is for k-median/k-means")
    d = inst.dist * inst.dist if inst.objective == "k-means" else inst.dist
    X = np.array(sorted(int(x) for x in X), dtype=np.int64)
    n, k = inst.n, len(X)
    own_x = X[np.argmin(d[X], axis=0)]
    dx = d[own_x, np.arange(n)]
    if mode == "exhaustive":
        if math.comb(n, k) > limit:
            raise ValueError(f"C({n},{k}) exceeds the exhaustive limit {limit}")
        blocks = combo_chunks(n, k, max(1, 2_000_000 // (n * k)))
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        blocks = [np.sort(np.stack([rng.choice(n, k, replace=False) for _ in range(m)]), axis=1)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for Y in blocks:
        dY = d[Y]                                            # (m, k, n)
        pos = np.argmin(dY, axis=1)
        own_y = np.take_along_axis(Y, pos, axis=1)           # (m, n)
        dy = dY.min(axis=1)
        ycenter_in_x = np.isin(own_y, X)
        xcenter_in_y = (Y[:, :, None] == own_x[None, None, :]).any(axis=1)
        a2 = xcenter_in_y & ~ycenter_in_x
        a34 = ~xcenter_in_y
        a1 = xcenter_in_y & ycenter_in_x
        lhs = np.where(~a1, dx[None, :], 0.0).sum(axis=1)
        rhs = (np.where(a2, np.minimum(dx[None, :], alpha * dy), 0.0).sum(axis=1)
               + alpha * np.where(a34, dy, 0.0).sum(axis=1))
        bad = ~leq(lhs, rhs)
        if bad.any():
            return tuple(int(y) for y in Y[np.flatnonzero(bad)[0]])
    return None


def check_uniform_approx_condition(inst: Instance, X: Sequence[int], alpha: float,
                                   mode: str = "exhaustive", m: int = 1000, seed: int = 0) -> bool:
    return uniform_approx_violation(inst, X, alpha, mode, m, seed) is None


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class ClusterReport:
    index: int
    center: int
    size: int
    ccv_center: bool | None = None
    ccv_proximity: bool | None = None
    center_separation: bool | None = None
    ccc_witnesses: list[int] = field(default_factory=list)
    ccc2_witnesses: list[tuple[int, int]] = field(default_factory=list)
    lpr: Verdict | None = None
    slpr: Verdict | None = None
    lpr_eps: Verdict | None = None


@dataclass
class StabilityReport:
    clusters: list[ClusterReport]
    degenerate: bool
    alpha: float
    eps: float | None
    r_star: float | None

    COLUMNS = ("cluster", "center", "size", "ccv_center", "ccv_proximity", "center_separation",
               "ccc", "ccc2", "lpr", "slpr", "lpr_eps", "witness")

    def rows(self) -> list[dict[str, str]]:
        def flag(x):
            return "" if x is None else str(x).lower()

        def verdict(v):
            return "" if v is None else v.status

        rows = []
        for c in self.clusters:
            wit = next((v.witness.describe() for v in (c.lpr, c.slpr, c.lpr_eps)
                        if v is not None and v.witness is not None), "")
            rows.append({
                "cluster": str(c.index), "center": str(c.center), "size": str(c.size),
                "ccv_center": flag(c.ccv_center), "ccv_proximity": flag(c.ccv_proximity),
                "center_separation": flag(c.center_separation),
                "ccc": ";".join(map(str, c.ccc_witnesses)),
                "ccc2": ";".join(f"{i}/{l}" for i, l in c.ccc2_witnesses),
                "lpr": verdict(c.lpr), "slpr": verdict(c.slpr), "lpr_eps": verdict(c.lpr_eps),
                "witness": wit,
            })
        return rows


def stability_report(inst: Instance, alpha: float, eps: float | None = None,
                     checks: Sequence[str] = ("ccv", "ccv-proximity", "center-separation", "ccc", "lpr"),
                     exact: ExactResult | None = None) -> StabilityReport:
    ctx = _context(inst, exact)
    opt = ctx.exact.clustering
    kcenter = inst.objective in KCENTER_OBJECTIVES
    reports = [ClusterReport(i, c, len(ctx.clusters[i])) for i, c in enumerate(opt.centers)]
    if kcenter and {"ccv", "ccv-proximity"} & set(checks):
        g = threshold_digraph(inst, ctx.r_star)
        ccv = ccv_mask(g)
        prox = proximity_mask(g, inst, ccv) if "ccv-proximity" in checks else None
        for rep in reports:
            rep.ccv_center = bool(ccv[rep.center])
            if prox is not None:
                rep.ccv_proximity = bool(prox[rep.center])
    if kcenter and "center-separation" in checks:
        for rep in reports:
            rep.center_separation = satisfies_center_separation(inst, opt, rep.index, ctx.r_star)
    if "ccc" in checks and eps is not None:
        ccc, ccc2 = detect_ccc(inst, opt, eps, ctx.r_star)
        for i, j in ccc:
            reports[j].ccc_witnesses.append(i)
        for i, j, l in ccc2:
            reports[j].ccc2_witnesses.append((i, l))
    idx = list(range(opt.k))
    if "lpr" in checks or "slpr" in checks:
        found = _scan(ctx, alpha, idx, None)
        for rep in reports:
            rep.lpr = found[rep.index]
        if "slpr" in checks and kcenter:
            for rep in reports:
                group = [rep.index] + neighbor_clusters(inst, ctx.clusters, rep.index, ctx.r_star)
                bad = next((found[j] for j in group if found[j].status != "not-refuted"), None)
                rep.slpr = Verdict("not-refuted", rep.index) if bad is None else \
                    Verdict(bad.status, rep.index, bad.witness, f"via cluster {bad.cluster}")
    if "lpr-eps" in checks and eps is not None:
        found = _scan(ctx, alpha, idx, eps)
        for rep in reports:
            rep.lpr_eps = found[rep.index]
    return StabilityReport(reports, not ctx.exact.unique, alpha, eps, ctx.r_star)

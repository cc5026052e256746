"""Solver registry, comparisons against ground truth and the exact oracle,
and manifest-driven benchmark suites with CSV output."""

from __future__ import annotations

import csv
import io
import math
import operator
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .asym import plain_asym_solve, radius_search, robust_asym_solve
from .generate import GenSpec, generate, random_asymmetric, random_metric
from .kcenter import greedy_2approx, solve_robust_kcenter
from .local_search import LocalSearchConfig, local_search
from .metric import Clustering, Instance, load_clustering, load_instance
from .objectives import exact_solve

BENCH_COLUMNS = ("instance", "algorithm", "k", "cost", "oracle_cost", "ratio", "recovered",
                 "mismatch", "seconds", "seed", "params")
SUITE_COLUMNS = BENCH_COLUMNS + ("assert", "passed")
MANIFEST_HEADER = ("kind", "input", "algo", "params", "assert")
DEFAULT_ORACLE_LIMIT = 10**6


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class SolveOutput:
    clustering: Clustering
    objective: str
    meta: dict[str, str] = field(default_factory=dict)
    trace: list = field(default_factory=list)


@dataclass
class BenchRecord:
    instance: str
    algorithm: str
    k: int
    cost: float
    oracle_cost: float | None = None
    ratio: float | None = None
    recovered: int | None = None
    mismatch: int | None = None
    seconds: float = 0.0
    seed: int = 0
    params: str = ""

    def row(self) -> dict[str, str]:
        def num(x):
            return "" if x is None else repr(float(x)) if isinstance(x, float) else str(x)

        return {
            "instance": self.instance, "algorithm": self.algorithm, "k": str(self.k),
            "cost": num(self.cost), "oracle_cost": num(self.oracle_cost), "ratio": num(self.ratio),
            "recovered": num(self.recovered), "mismatch": num(self.mismatch),
            "seconds": f"{self.seconds:.4f}", "seed": str(self.seed), "params": self.params,
        }


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------

def _f(params: dict, key: str, default=None):
    return float(params[key]) if key in params else default


def _solve_local(inst: Instance, params: dict, seed: int) -> SolveOutput:
    obj = params.get("objective", inst.objective if inst.objective in ("k-median", "k-means") else "k-median")
    inst = inst.with_objective(obj)
    t = int(params["t"]) if "t" in params else None
    cfg = LocalSearchConfig(epsilon=_f(params, "epsilon", 0.2), t=t, seed=seed,
                            init=params.get("init", "farthest-first"))
    res = local_search(inst, cfg)
    meta = {"swaps": str(len(res.trace)), "converged": str(res.converged).lower(),
            "epsilon": repr(cfg.epsilon), "t": str(cfg.swap_size)}
    return SolveOutput(res.clustering, obj, meta, res.trace)


def _kc_output(res, objective: str) -> SolveOutput:
    meta = {"radius": repr(res.radius)}
    if res.r is not None:
        meta["r"] = repr(res.r)
    meta["condition1"] = str(res.conditions_applied[0]).lower()
    meta["condition2"] = str(res.conditions_applied[1]).lower()
    meta.update({k: str(v) for k, v in res.meta.items()})
    return SolveOutput(res.clustering, objective, meta)


def _solve_greedy(inst: Instance, params: dict, seed: int) -> SolveOutput:
    return _kc_output(greedy_2approx(inst, seed), "k-center")


def _solve_robust(inst: Instance, params: dict, seed: int) -> SolveOutput:
    return _kc_output(solve_robust_kcenter(inst, _f(params, "r"), seed), "k-center")


def _asym_inst(inst: Instance) -> Instance:
    return inst.with_objective("asymmetric-k-center")


def _solve_asym(inst: Instance, params: dict, seed: int) -> SolveOutput:
    inst = _asym_inst(inst)
    r = _f(params, "r")
    res = plain_asym_solve(inst, r) if r is not None else \
        radius_search(inst, "plain", params.get("strategy", "auto"))
    return _kc_output(res, "asymmetric-k-center")


def _solve_asym_robust(inst: Instance, params: dict, seed: int) -> SolveOutput:
    inst = _asym_inst(inst)
    r = _f(params, "r")
    res = robust_asym_solve(inst, r)[0] if r is not None else \
        radius_search(inst, "robust", params.get("strategy", "auto"))
    return _kc_output(res, "asymmetric-k-center")


def _solve_exact(inst: Instance, params: dict, seed: int) -> SolveOutput:
    if "objective" in params:
        inst = inst.with_objective(params["objective"])
    ex = exact_solve(inst)
    return SolveOutput(ex.clustering, inst.objective, {"unique": str(ex.unique).lower()})


SOLVERS: dict[str, Callable[[Instance, dict, int], SolveOutput]] = {
    "exact": _solve_exact,
    "local-search": _solve_local,
    "kcenter-greedy": _solve_greedy,
    "kcenter-robust": _solve_robust,
    "asym-kcenter": _solve_asym,
    "asym-kcenter-robust": _solve_asym_robust,
}


def solve(inst: Instance, algo: str, params: dict | None = None, seed: int = 0) -> SolveOutput:
    if algo not in SOLVERS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {sorted(SOLVERS)}")
    return SOLVERS[algo](inst, dict(params or {}), seed)


# --------------------------------------------------------------------------
# comparison
# --------------------------------------------------------------------------

def partition_mismatch(a: Sequence[frozenset[int]], b: Sequence[frozenset[int]], n: int) -> int:
    """n minus the largest total overlap of a one-to-one cluster matching
    (clusterings may differ in cluster count)."""
    a = [c for c in a if c]
    b = [c for c in b if c]
    overlap = np.array([[len(x & y) for y in b] for x in a], dtype=np.int64)
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return int(n - overlap[rows, cols].sum())


def recovered_count(found: Clustering, truth_clusters: Sequence[frozenset[int]]) -> int:
    have = found.partition()
    return sum(1 for c in truth_clusters if c in have)


def oracle_cost(inst: Instance, objective: str, limit: int = DEFAULT_ORACLE_LIMIT) -> float | None:
    if math.comb(inst.n, inst.k) > limit:
        return None
    return exact_solve(inst.with_objective(objective), limit).cost


def _ratio(cost: float, oracle: float | None) -> float | None:
    if oracle is None:
        return None
    if oracle == 0:
        return 1.0 if cost == 0 else math.inf
    return cost / oracle


def params_text(params: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items())


def bench_one(inst: Instance, name: str, algo: str, params: dict, seed: int,
              truth: Sequence[frozenset[int]] | None = None,
              oracle_limit: int = DEFAULT_ORACLE_LIMIT) -> BenchRecord:
    start = time.perf_counter()
    out = solve(inst, algo, params, seed)
    seconds = time.perf_counter() - start
    oracle = oracle_cost(inst, out.objective, oracle_limit)
    rec = BenchRecord(name, algo, inst.k, out.clustering.cost, oracle, _ratio(out.clustering.cost, oracle),
                      seconds=seconds, seed=seed, params=params_text(params))
    if truth is not None:
        rec.recovered = recovered_count(out.clustering, truth)
        rec.mismatch = partition_mismatch(out.clustering.clusters(), truth, inst.n)
    return rec


def run_compare(instance_path: str | Path, truth_path: str | Path | None, solvers: Sequence[str],
                seed: int = 0, params: dict | None = None, objective: str | None = None,
                validate: bool = True) -> list[BenchRecord]:
    if not solvers:
        return []
    inst = load_instance(instance_path, objective=objective, validate=validate)
    truth = None
    if truth_path is not None:
        cl, _ = load_clustering(truth_path)
        truth = cl.clusters()
    return [bench_one(inst, str(instance_path), algo, dict(params or {}), seed, truth) for algo in solvers]


def write_csv(records: Sequence[dict[str, str]], columns: Sequence[str], path: str | Path | None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(rec)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

_OPS = {"<=": operator.le, ">=": operator.ge, "==": operator.eq, "!=": operator.ne,
        "<": operator.lt, ">": operator.gt}
_ASSERT_RE = re.compile(r"^\s*([a-z_]+)\s*(<=|>=|==|!=|<|>)\s*([A-Za-z0-9_.+-]+)\s*$")


@dataclass
class ManifestRow:
    line: int
    kind: str
    input: str
    algo: str
    params: dict[str, str]
    assertion: str


def parse_kv(text: str, line: int | None = None) -> dict[str, str]:
    out: dict[str, str] = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, sep, value = part.partition("=")
        if not sep or not key.strip():
            raise ManifestError(f"expected key=value, got {part!r}", line)
        out[key.strip()] = value.strip()
    return out


def parse_assertion(text: str, line: int | None = None) -> list[tuple[str, str, str]]:
    clauses = []
    for part in filter(None, (p.strip() for p in text.split("&"))):
        m = _ASSERT_RE.match(part)
        if not m:
            raise ManifestError(f"cannot parse assertion {part!r}", line)
        clauses.append(m.groups())
    return clauses


def check_assertion(clauses, record: BenchRecord, extra: dict[str, float]) -> bool:
    values = {"ratio": record.ratio, "mismatch": record.mismatch, "recovered": record.recovered,
              "cost": record.cost, "oracle_cost": record.oracle_cost, "k": record.k, **extra}
    for name, op, rhs in clauses:
        left = values.get(name)
        if left is None:
            return False
        try:
            right = float(rhs)
        except ValueError:
            right = values.get(rhs)
            if right is None:
                return False
        if not _OPS[op](float(left), float(right)):
            return False
    return True


KINDS = ("file", "planted", "mixed", "random", "random-asym")


def parse_manifest(path: str | Path) -> list[ManifestRow]:
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    rows: list[ManifestRow] = []
    header = None
    for lineno, fields in enumerate(reader, 1):
        if not fields or (len(fields) == 1 and not fields[0].strip()) or fields[0].startswith("#"):
            continue
        if header is None:
            header = tuple(f.strip() for f in fields)
            if header != MANIFEST_HEADER:
                raise ManifestError(f"header must be {','.join(MANIFEST_HEADER)}", lineno)
            continue
        if len(fields) != len(MANIFEST_HEADER):
            raise ManifestError(f"expected {len(MANIFEST_HEADER)} fields, got {len(fields)}", lineno)
        kind, inp, algo, params, assertion = (f.strip() for f in fields)
        if kind not in KINDS:
            raise ManifestError(f"unknown kind {kind!r}", lineno)
        if algo not in SOLVERS:
            raise ManifestError(f"unknown algorithm {algo!r}", lineno)
        parse_assertion(assertion, lineno)
        rows.append(ManifestRow(lineno, kind, inp, algo, parse_kv(params, lineno), assertion))
    if header is None:
        raise ManifestError("empty manifest")
    return rows


def _gen_spec(args: dict[str, str], seed: int, noise_default: int = 0) -> GenSpec:
    sizes = tuple(int(s) for s in args.get("sizes", "4/4/4").split("/"))
    asym = args.get("asym")
    return GenSpec(
        seed=int(args.get("seed", seed)), k=int(args.get("k", len(sizes))), sizes=sizes,
        intra_radius=float(args.get("r", 1.0)), separation=float(args.get("sep", 10.0)),
        asymmetry=float(asym) if asym else None, noise=int(args.get("noise", noise_default)),
        alpha=float(args.get("alpha", 2.0)),
        eps=float(args["eps"]) if "eps" in args else None,
        certify=args.get("certify", "lpr"),
    )


def materialize(row: ManifestRow, base: Path, seed: int):
    """Instance, display name and ground-truth clusters for one manifest row."""
    if row.kind == "file":
        inst = load_instance(base / row.input, objective=row.params.get("objective"))
        truth = None
        if "truth" in row.params:
            cl, _ = load_clustering(base / row.params["truth"])
            truth = cl.clusters()
        return inst, row.input, truth
    args = parse_kv(row.input, row.line)
    name = f"{row.kind}:{row.input}"
    if row.kind in ("planted", "mixed"):
        spec = _gen_spec(args, seed, 6 if row.kind == "mixed" else 0)
        out = generate(spec)
        clusters = out.planted.clusters()
        truth = [c for c, ok in zip(clusters, out.flags) if ok]
        return out.instance, name, truth
    n, k = int(args.get("n", 10)), int(args.get("k", 3))
    s = int(args.get("seed", seed))
    if row.kind == "random":
        return random_metric(s, n, k, args.get("objective", "k-median")), name, None
    return random_asymmetric(s, n, k, float(args.get("lam", 3.0))), name, None


def _run_row(row: ManifestRow, base: Path, seed: int) -> dict[str, str]:
    inst, name, truth = materialize(row, base, seed)
    params = {k: v for k, v in row.params.items() if k not in ("truth",)}
    rec = bench_one(inst, name, row.algo, params, seed, truth)
    extra = {"flagged": float(len(truth))} if truth is not None else {}
    ok = check_assertion(parse_assertion(row.assertion), rec, extra)
    out = rec.row()
    out["assert"] = row.assertion
    out["passed"] = str(ok).lower()
    return out


def run_suite(manifest: str | Path, out: str | Path | None = None, seed: int = 0,
              threads: int = 1) -> tuple[str, bool]:
    """Run every manifest row; rows are reported in manifest order.
    Returns the CSV text and whether every assertion held."""
    rows = parse_manifest(manifest)
    base = Path(manifest).parent
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _run_row(r, base, seed), rows))
    else:
        results = [_run_row(r, base, seed) for r in rows]
    text = write_csv(results, SUITE_COLUMNS, out)
    return text, all(r["passed"] == "true" for r in results)


def shipped_manifest() -> Path:
    return Path(__file__).parent / "data" / "acceptance.csv"

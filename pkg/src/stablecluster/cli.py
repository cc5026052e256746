"""Command-line entry point.

Exit codes: 0 success, 1 a checked assertion failed, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .generate import GenerationError, GenSpec, embed_approx_stable, generate
from .local_search import INIT_MODES, LocalSearchConfig, local_search
from .metric import OBJECTIVES, InstanceError, format_clustering, load_instance, save_clustering, save_instance
from .objectives import OracleTooLarge, exact_solve
from .stability import (
    check_hits,
    check_uniform_approx_condition,
    detect_ccc,
    stability_report,
)

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2
CHECKS = ("ccv", "ccv-proximity", "center-separation", "ccc", "lpr", "slpr", "lpr-eps", "hits", "uniform-approx")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace("/", ",").split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablecluster", description="Clustering under local perturbation resilience.")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", help="output path (subcommands also accept -o)")
    p.add_argument("--no-validate", action="store_true", help="skip the triangle-inequality check on load")
    p.add_argument("--threads", type=int, default=1, help="worker threads for bench rows")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", help="instance file")
            sp.add_argument("--objective", choices=OBJECTIVES)
        sp.add_argument("-o", dest="sub_out")
        sp.add_argument("--seed", dest="sub_seed", type=int)

    g = sub.add_parser("gen", help="generate an instance plus ground truth")
    common(g, instance=False)
    g.add_argument("--kind", choices=("planted", "mixed", "embed"), required=True)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--sizes", default="4,4,4")
    g.add_argument("--r", type=float, default=1.0)
    g.add_argument("--sep", type=float, default=10.0)
    g.add_argument("--asym", type=float, default=None, help="skew factor lambda (directed instance)")
    g.add_argument("--noise", type=int, default=0)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--eps", type=float, default=None)
    g.add_argument("--certify", choices=("lpr", "lpr-eps", "none"), default=None)
    g.add_argument("--input", help="source instance for --kind embed")

    s = sub.add_parser("solve", help="run one solver")
    common(s)
    s.add_argument("--algo", choices=sorted(harness.SOLVERS), required=True)
    s.add_argument("--epsilon", type=float, default=0.2)
    s.add_argument("--t", type=int)
    s.add_argument("--init", choices=INIT_MODES, default="farthest-first")
    s.add_argument("--r", type=float)
    s.add_argument("--strategy", choices=("auto", "scan", "bisect"), default="auto")
    s.add_argument("--trace", help="write the local-search trace CSV here")

    pr = sub.add_parser("probe", help="stability detectors and refutation probes")
    common(pr)
    pr.add_argument("--check", choices=CHECKS, required=True)
    pr.add_argument("--alpha", type=float, default=2.0)
    pr.add_argument("--eps", type=float, default=0.0)
    pr.add_argument("--beta", type=int, default=1)
    pr.add_argument("--gamma", type=float, default=1.0)
    pr.add_argument("--centers", help="comma-separated point indices (hits, uniform-approx)")
    pr.add_argument("--witness-dir", help="write refuting perturbations here as instance files")

    c = sub.add_parser("compare", help="run solvers against ground truth and the oracle")
    common(c)
    c.add_argument("--truth")
    c.add_argument("--solvers", default="", help="comma-separated solver names")
    c.add_argument("--epsilon", type=float, default=0.2)

    b = sub.add_parser("bench", help="run a manifest suite")
    common(b, instance=False)
    b.add_argument("manifest", nargs="?", help="manifest CSV (default: the shipped acceptance manifest)")

    e = sub.add_parser("exact", help="brute-force optimum")
    common(e)
    return p


def _resolve(args) -> tuple[int, str | None]:
    seed = args.sub_seed if getattr(args, "sub_seed", None) is not None else args.seed
    out = getattr(args, "sub_out", None) or args.out
    return seed, out


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args):
    return load_instance(args.instance, objective=args.objective, validate=not args.no_validate)


def cmd_gen(args, seed, out) -> int:
    if not out:
        raise UsageError("gen needs an output path (-o)")
    if args.kind == "embed":
        if not args.input:
            raise UsageError("--kind embed needs --input")
        inst = load_instance(args.input, validate=not args.no_validate)
        eps = args.eps if args.eps is not None else 0.5
        emb, k2 = embed_approx_stable(inst, args.alpha, eps)
        save_instance(emb, out)
        print(f"n={emb.n} k={k2}")
        return EXIT_OK
    sizes = tuple(_int_list(args.sizes))
    certify = args.certify or ("lpr-eps" if args.eps is not None else "lpr")
    spec = GenSpec(seed=seed, k=args.k, sizes=sizes, intra_radius=args.r, separation=args.sep,
                   asymmetry=args.asym, noise=args.noise, alpha=args.alpha, eps=args.eps, certify=certify)
    res = generate(spec)
    save_instance(res.instance, out)
    flags = " ".join("1" if f else "0" for f in res.flags)
    save_clustering(res.planted, f"{out}.truth",
                    {"flags": flags, "r_star": repr(res.r_star), "separation": repr(res.separation)})
    print(f"n={res.instance.n} k={res.instance.k} r_star={res.r_star!r} attempts={res.attempts}")
    return EXIT_OK


def cmd_solve(args, seed, out) -> int:
    inst = _load(args)
    params = {}
    if args.algo == "local-search":
        params = {"epsilon": args.epsilon, "init": args.init}
        if args.t is not None:
            params["t"] = args.t
        if args.objective:
            params["objective"] = args.objective
    elif args.r is not None:
        params["r"] = args.r
    if args.algo in ("asym-kcenter", "asym-kcenter-robust"):
        params["strategy"] = args.strategy
    res = harness.solve(inst, args.algo, params, seed)
    meta = " ".join(f"{k}={v}" for k, v in res.meta.items())
    _emit(format_clustering(res.clustering, {"meta": meta}), out)
    if args.trace:
        rows = [{"iteration": str(s.iteration), "cost": repr(s.new_cost),
                 "swap": " ".join(map(str, s.removed)) + " -> " + " ".join(map(str, s.added))}
                for s in res.trace]
        harness.write_csv(rows, ("iteration", "cost", "swap"), args.trace)
    return EXIT_OK


def cmd_probe(args, seed, out) -> int:
    inst = _load(args)
    if args.check in ("hits", "uniform-approx"):
        if args.check == "hits":
            if not args.centers:
                raise UsageError("--check hits needs --centers")
            kc = inst.with_objective("k-center" if inst.symmetric else "asymmetric-k-center")
            r_star = exact_solve(kc).cost
            ok = check_hits(inst, _int_list(args.centers), args.beta, args.gamma, r_star)
        else:
            if args.centers:
                X = _int_list(args.centers)
            else:
                X = list(local_search(inst, LocalSearchConfig(epsilon=0.2, seed=seed)).clustering.centers)
            ok = check_uniform_approx_condition(inst, X, args.alpha)
        _emit(harness.write_csv([{"check": args.check, "result": str(ok).lower()}], ("check", "result"), None), out)
        return EXIT_OK
    checks = [args.check]
    if args.check == "ccc":
        opt = exact_solve(inst).clustering
        ccc, ccc2 = detect_ccc(inst, opt, args.eps)
        rows = [{"kind": "ccc", "capturer": str(i), "cluster": str(j), "discounted": ""} for i, j in ccc]
        rows += [{"kind": "ccc2", "capturer": str(i), "cluster": str(j), "discounted": str(l)} for i, j, l in ccc2]
        _emit(harness.write_csv(rows, ("kind", "capturer", "cluster", "discounted"), None), out)
        return EXIT_OK
    report = stability_report(inst, args.alpha, args.eps if args.check == "lpr-eps" else None, checks)
    _emit(harness.write_csv(report.rows(), report.COLUMNS, None), out)
    if args.witness_dir:
        target = Path(args.witness_dir)
        target.mkdir(parents=True, exist_ok=True)
        for rep in report.clusters:
            for tag, v in (("lpr", rep.lpr), ("slpr", rep.slpr), ("lpr-eps", rep.lpr_eps)):
                if v is not None and v.witness is not None:
                    save_instance(v.witness.instance(inst), target / f"witness_{tag}_{rep.index}.txt")
    return EXIT_OK


def cmd_compare(args, seed, out) -> int:
    solvers = [s for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in harness.SOLVERS:
            raise UsageError(f"unknown solver {s!r}")
    records = harness.run_compare(args.instance, args.truth, solvers, seed, {"epsilon": args.epsilon}
                                  if "local-search" in solvers else {}, args.objective, not args.no_validate)
    _emit(harness.write_csv([r.row() for r in records], harness.BENCH_COLUMNS, None), out)
    return EXIT_OK


def cmd_bench(args, seed, out) -> int:
    manifest = args.manifest or harness.shipped_manifest()
    text, ok = harness.run_suite(manifest, None, seed, max(1, args.threads))
    _emit(text, out)
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_exact(args, seed, out) -> int:
    inst = _load(args)
    ex = exact_solve(inst)
    _emit(format_clustering(ex.clustering, {"meta": f"unique={str(ex.unique).lower()} sets={len(ex.optimal_sets)}"}), out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "probe": cmd_probe, "compare": cmd_compare,
            "bench": cmd_bench, "exact": cmd_exact}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed, out = _resolve(args)
    try:
        return COMMANDS[args.command](args, seed, out)
    except (UsageError, InstanceError, harness.ManifestError, OracleTooLarge, GenerationError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

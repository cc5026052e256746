import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stablecluster.generate import (
    GRID,
    GenerationError,
    GenSpec,
    embed_approx_stable,
    gen_mixed,
    gen_planted,
    generate,
    random_asymmetric,
    random_metric,
)
from stablecluster.metric import Instance, format_instance, parse_instance, triangle_witness
from stablecluster.objectives import exact_solve
from stablecluster.stability import probe_all_lpr


def test_planted_basic():
    inst, planted, r_star = gen_planted(GenSpec(seed=0, k=3, sizes=(4, 4, 4), intra_radius=1, separation=10))
    ex = exact_solve(inst)
    assert r_star == ex.cost <= 1
    assert ex.clustering.partition() == planted.partition()
    assert sorted(len(c) for c in planted.clusters()) == [4, 4, 4]


def test_cross_distances_exceed_separation():
    spec = GenSpec(seed=2, sizes=(3, 5, 4), intra_radius=1.0, separation=7)
    inst, planted, _ = gen_planted(spec)
    for a, b in itertools.combinations(planted.clusters(), 2):
        assert inst.dist[np.ix_(sorted(a), sorted(b))].min() > 7


def test_tight_separation_escalates(caplog):
    caplog.set_level(logging.WARNING, logger="stablecluster.generate")
    out = generate(GenSpec(seed=1, sizes=(4, 4, 4), separation=2.01, alpha=6.0))
    assert out.attempts > 1 and out.separation > 2.01
    assert "widening" in caplog.text


def test_gives_up_with_diagnostics():
    with pytest.raises(GenerationError) as info:
        generate(GenSpec(seed=1, sizes=(4, 4, 4), separation=2.01, alpha=10.0, max_retries=0))
    assert "probe refuted" in str(info.value)


@pytest.mark.parametrize("kwargs", [
    {"sizes": (4, 4)},
    {"sizes": (0, 4, 4)},
    {"separation": 2.0},
    {"intra_radius": 0},
    {"asymmetry": 0.5},
    {"noise": -1},
    {"certify": "maybe"},
    {"certify": "lpr-eps"},
    {"sizes": (2, 4, 4), "eps": 0.1},
])
def test_spec_rejects(kwargs):
    with pytest.raises(ValueError):
        GenSpec(**kwargs)


def test_mixed_noise_clump_is_degenerate():
    spec = GenSpec(seed=6, sizes=(4, 4, 4), separation=6, noise=6)
    inst, planted, flags = gen_mixed(spec)
    assert inst.n == 18 and inst.k == 5
    # the noise clump splits into size-2 clusters, the planted ones have 4
    sizes = [len(c) for c in planted.clusters()]
    assert [f for f, s in zip(flags, sizes) if s == 4] == [True, True, True]
    assert not any(f for f, s in zip(flags, sizes) if s != 4)
    statuses = [v.status for v in probe_all_lpr(inst, 2.0)]
    assert statuses.count("degenerate") >= 1
    stable = [i for i, f in enumerate(flags) if f]
    assert all(statuses[i] == "not-refuted" for i in stable)


def test_mixed_without_noise_is_planted():
    spec = GenSpec(seed=3, sizes=(4, 4, 4))
    inst_a, planted_a, _ = gen_planted(spec)
    inst_b, planted_b, flags = gen_mixed(spec)
    assert inst_a == inst_b and planted_a == planted_b
    assert all(flags)


@pytest.mark.parametrize("kwargs", [{}, {"asymmetry": 3.0}, {"noise": 6, "separation": 6}])
def test_reproducible_and_valid(kwargs):
    spec = GenSpec(seed=9, sizes=(4, 4, 4), **kwargs)
    a, b = generate(spec), generate(spec)
    assert a.instance == b.instance and a.planted == b.planted and a.flags == b.flags
    d = a.instance.dist
    assert triangle_witness(d) is None
    assert np.array_equal(np.round(d / GRID) * GRID, d)
    assert np.array_equal(parse_instance(format_instance(a.instance)).dist, d)


@given(st.integers(0, 2**32 - 1), st.integers(2, 20), st.floats(1, 5))
def test_random_generators_valid(seed, n, lam):
    assert triangle_witness(random_metric(seed, n, 1).dist) is None
    inst = random_asymmetric(seed, n, 1, lam)
    assert triangle_witness(inst.dist) is None
    assert not inst.symmetric or n < 2


def test_embed_arithmetic():
    inst = random_metric(0, 4, 2)
    out, k2 = embed_approx_stable(inst, 1.0, 0.5)
    assert out.n == 4 + 8 and k2 == 2 + 8 == out.k
    far = 2 * 1.0 * 4 * inst.dist.max()
    assert out.dist[0, 5] == far and out.dist[6, 7] == far
    assert triangle_witness(out.dist) is None


@pytest.mark.parametrize("seed", range(3))
def test_embed_preserves_cost_and_forces_centers(seed):
    inst = random_metric(seed, 5, 2)
    alpha, eps = 2.0, 1.0
    out, k2 = embed_approx_stable(inst, alpha, eps)
    base = exact_solve(inst).cost
    assert exact_solve(out).cost == base
    added = set(range(inst.n, out.n))
    for Y in itertools.combinations(range(out.n), k2):
        cost = out.dist[list(Y)].min(axis=0).sum()
        if cost <= alpha * base:
            assert added <= set(Y)


def test_embed_rejects():
    with pytest.raises(ValueError):
        embed_approx_stable(random_asymmetric(0, 4, 1), 2.0, 0.5)
    with pytest.raises(ValueError):
        embed_approx_stable(random_metric(0, 4, 1), 2.0, 0)


def test_embed_eps_rounding():
    inst = random_metric(1, 3, 1)
    out, k2 = embed_approx_stable(inst, 1.0, 0.3)
    assert out.n - inst.n == math.ceil(3 / 0.3 - 1e-9) == 10

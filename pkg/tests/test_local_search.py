import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_points
from stablecluster.generate import GenSpec, generate
from stablecluster.metric import Clustering, Instance
from stablecluster.local_search import (
    LocalSearchConfig,
    find_improving_swap,
    local_search,
    lpr_membership_report,
    neighborhood_size,
    swap_count_bound,
    swap_neighborhood,
)
from stablecluster.objectives import exact_solve, voronoi


def star(leaves=5):
    n = leaves + 1
    d = np.full((n, n), 2.0)
    d[0, :] = d[:, 0] = 1.0
    np.fill_diagonal(d, 0)
    return Instance(d, 1, "k-median")


def test_config_defaults():
    cfg = LocalSearchConfig()
    assert cfg.swap_size == 5
    assert LocalSearchConfig(epsilon=0.3).swap_size == 4
    assert LocalSearchConfig(epsilon=1.0).swap_size == 1
    assert LocalSearchConfig(t=2).swap_size == 2
    assert 0 < cfg.gate(10) < 1


@pytest.mark.parametrize("kwargs", [{"epsilon": 0}, {"epsilon": 1.5}, {"t": 0}, {"init": "kmeans++"},
                                    {"max_iterations": -1}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        LocalSearchConfig(**kwargs)


def test_k_equals_n_no_swaps():
    inst = Instance(random_points(np.random.default_rng(0), 5), 5, "k-median")
    res = local_search(inst)
    assert res.clustering.cost == 0 and res.trace == [] and res.converged


def test_star_converges_to_hub():
    inst = star()
    assert voronoi(inst, [1]).cost == 9
    res = local_search(inst, LocalSearchConfig(epsilon=0.2), init_centers=[1])
    assert res.clustering.centers == (0,)
    assert res.clustering.cost == 5
    assert len(res.trace) == 1
    # 5 <= (1 - 0.2/6) * 9 passes the gate
    assert res.trace[0].removed == (1,) and res.trace[0].added == (0,)


def test_rejects_kcenter_objective():
    with pytest.raises(ValueError):
        local_search(Instance(np.zeros((2, 2)), 1, "k-center"))


def test_neighborhood_small():
    cands = list(swap_neighborhood([0, 1], 1, 3))
    assert sorted(cands) == [(0, 2), (1, 2)]
    assert neighborhood_size(2, 3, 1) == 2


def _brute_neighborhood(centers, t, n):
    C = set(centers)
    out = set()
    for Y in itertools.combinations(range(n), len(C)):
        if 1 <= len(C - set(Y)) <= t:
            out.add(Y)
    return out


@pytest.mark.parametrize("k,n,t", [(3, 6, 2), (2, 5, 2), (3, 7, 3), (1, 4, 1)])
def test_neighborhood_matches_generate_and_dedupe(k, n, t):
    centers = list(range(0, 2 * k, 2))[:k]
    listed = list(swap_neighborhood(centers, t, n))
    assert len(listed) == len(set(listed))
    assert set(listed) == _brute_neighborhood(centers, t, n)
    assert len(listed) == neighborhood_size(k, n, t)


def test_full_reselection_count():
    k, n = 3, 7
    assert neighborhood_size(k, n, k) == sum(math.comb(k, s) * math.comb(n - k, s) for s in range(1, k + 1))


def _check_run(inst, cfg):
    res = local_search(inst, cfg)
    final = res.clustering
    # post-hoc scan, independent of the search loop
    assert find_improving_swap(inst, final.centers, cfg.epsilon, cfg.swap_size) is None
    assert len(res.trace) <= swap_count_bound(res.initial_cost, final.cost, cfg.epsilon, inst.n)
    for rec in res.trace:
        assert rec.new_cost <= (1 - cfg.epsilon / inst.n) * rec.old_cost
    return res


@given(st.integers(0, 2**32 - 1), st.integers(4, 10), st.integers(1, 3),
       st.sampled_from(["k-median", "k-means"]), st.sampled_from(["first-k", "random", "farthest-first"]))
def test_local_search_properties(seed, n, k, objective, init):
    rng = np.random.default_rng(seed)
    inst = Instance(random_points(rng, n), min(k, n), objective)
    cfg = LocalSearchConfig(epsilon=0.2, seed=seed, init=init)
    res = _check_run(inst, cfg)
    bound = 3 + 2 * 0.2 if objective == "k-median" else 9 + 0.2
    assert res.clustering.cost <= bound * exact_solve(inst).cost * (1 + 1e-9)
    again = local_search(inst, cfg)
    assert again.trace == res.trace and again.clustering == res.clustering


def test_small_t_still_locally_optimal():
    inst = Instance(random_points(np.random.default_rng(3), 10), 3, "k-median")
    _check_run(inst, LocalSearchConfig(epsilon=0.2, t=1, init="first-k"))


def test_max_iterations_cap():
    inst = star()
    res = local_search(inst, LocalSearchConfig(max_iterations=0), init_centers=[1])
    assert not res.converged and res.clustering.centers == (1,)


def test_membership_report():
    inst = Instance(random_points(np.random.default_rng(1), 8), 2, "k-median")
    opt = exact_solve(inst).clustering
    assert lpr_membership_report(inst, opt, opt) == [True, True]
    # split cluster 0 in two, merge nothing else
    big = max(range(2), key=lambda i: len(opt.clusters()[i]))
    members = sorted(opt.clusters()[big])
    other = 1 - big
    assign = np.array(opt.assign)
    moved = [v for v in members if v != opt.centers[big]][0]
    assign[moved] = 2
    assign[opt.assign == other] = 1
    assign[opt.assign == big] = np.where(np.arange(8)[opt.assign == big] == moved, 2, 0)
    split = Clustering((opt.centers[big], opt.centers[other], moved), assign, 0.0)
    flags = lpr_membership_report(inst, split, opt)
    assert flags[big] is False and flags[other] is True


def test_membership_on_planted_kmedian():
    alpha = 3 + 2 * 0.2
    out = generate(GenSpec(seed=11, sizes=(4, 4, 4), separation=12, objective="k-median", alpha=alpha))
    assert all(out.flags)
    res = local_search(out.instance, LocalSearchConfig(epsilon=0.2))
    assert lpr_membership_report(out.instance, res.clustering, out.planted) == [True, True, True]

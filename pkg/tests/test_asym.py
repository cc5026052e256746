import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bfs_hops, line_dist, random_points
from stablecluster.asym import (
    COVER_HOPS,
    ccv_mask,
    is_ccv,
    log_star,
    plain_asym_solve,
    proximity_mask,
    radius_search,
    robust_asym_solve,
    robust_asym_state,
    satisfies_ccv_proximity,
    satisfies_center_separation,
    tiebroken_paths,
    vishwanathan_solve,
    vishwanathan_state,
)
from stablecluster.generate import GenSpec, gen_mixed, gen_planted, random_asymmetric, random_digraph_metric
from stablecluster.metric import Instance, closeness, hop_distances, threshold_digraph
from stablecluster.objectives import exact_solve, opt_radius_candidates


def asym(d, k):
    return Instance(np.asarray(d, dtype=float), k, "asymmetric-k-center", symmetric=False)


def planted_asym(seed, sizes=(4, 4, 4)):
    return gen_planted(GenSpec(seed=seed, sizes=sizes, separation=6, asymmetry=3.0))


def test_symmetric_all_ccv():
    inst = Instance(random_points(np.random.default_rng(0), 6), 2, "k-center")
    g = threshold_digraph(inst, 3.0)
    assert ccv_mask(g).all()


def test_two_point_ccv():
    inst = asym([[0, 1], [3, 0]], 1)
    g = threshold_digraph(inst, 1)
    assert is_ccv(g, 0)
    assert not is_ccv(g, 1)


@given(st.integers(0, 2**32 - 1), st.floats(0.5, 6))
def test_ccv_matches_double_loop(seed, r):
    inst = random_asymmetric(seed, 8, 2)
    g = threshold_digraph(inst, r)
    mask = ccv_mask(g)
    for v in range(8):
        incoming = {u for u in range(8) if inst.dist[u, v] <= r * (1 + 1e-9) or u == v}
        outgoing = {u for u in range(8) if inst.dist[v, u] <= r * (1 + 1e-9) or u == v}
        assert mask[v] == (incoming <= outgoing) == is_ccv(g, v)


def test_single_ccv_has_proximity():
    inst = asym([[0, 1, 1], [5, 0, 5], [5, 5, 0]], 1)
    g = threshold_digraph(inst, 1)
    assert ccv_mask(g).tolist() == [True, False, False]
    assert satisfies_ccv_proximity(g, inst, 0)


def _brute_proximity(inst, g, c):
    ccv = ccv_mask(g)
    for v in g.in_set(c):
        if v == c:
            continue
        for c2 in np.flatnonzero(ccv):
            if c2 == c or c2 in g.out_set(c):
                continue
            h1 = hop_distances(g, c)[v]
            h2 = hop_distances(g, c2)[v]
            if h2 < h1:
                return False
            if h2 == h1 and (inst.dist[c2, v], c2) < (inst.dist[c, v], c):
                return False
    return True


@given(st.integers(0, 2**32 - 1), st.floats(1, 6))
def test_proximity_matches_brute_force(seed, r):
    inst = random_asymmetric(seed, 8, 2)
    g = threshold_digraph(inst, r)
    mask = proximity_mask(g, inst)
    ccv = ccv_mask(g)
    for c in range(8):
        assert mask[c] == (bool(ccv[c]) and _brute_proximity(inst, g, c))


def test_center_separation_examples():
    inst = Instance(line_dist([0, 1, 10, 11]), 1, "k-center")
    opt = exact_solve(inst).clustering
    assert satisfies_center_separation(inst, opt, 0, opt.cost)
    inst2 = Instance(line_dist([0, 1, 3, 4]), 2, "k-center")
    opt2 = exact_solve(inst2).clustering
    c = opt2.centers[0]
    foreign = [v for v in range(4) if opt2.assign[v] != 0]
    r = float(inst2.dist[foreign, c].min())
    assert not satisfies_center_separation(inst2, opt2, 0, r)
    assert satisfies_center_separation(inst2, opt2, 0, r - 0.5)


@pytest.mark.parametrize("seed", range(3))
def test_planted_centers_pass_detectors(seed):
    inst, planted, r_star = planted_asym(seed)
    g = threshold_digraph(inst, r_star)
    prox = proximity_mask(g, inst)
    for i, c in enumerate(planted.centers):
        assert prox[c]
        assert satisfies_center_separation(inst, planted, i, r_star)


def test_vishwanathan_symmetric_phase1_covers():
    inst = Instance(random_points(np.random.default_rng(1), 10), 3, "k-center")
    r_star = exact_solve(inst).cost
    state = vishwanathan_state(inst, r_star)
    assert state.marked.all()
    assert state.phase2_rounds == 0 and state.feasible
    assert len(state.centers) <= 3


def test_vishwanathan_k_equals_n():
    inst = random_asymmetric(2, 6, 6)
    for r in (0.0, 1.0, 50.0):
        assert vishwanathan_solve(inst, r)[1]


@pytest.mark.parametrize("seed", range(3))
def test_vishwanathan_planted_feasible_and_covering(seed):
    inst, planted, r_star = planted_asym(seed)
    centers, ok, _ = vishwanathan_solve(inst, r_star)
    assert ok and len(centers) <= inst.k
    g = threshold_digraph(inst, r_star)
    adj = g.adj.tolist()
    reach = set().union(*(bfs_hops(adj, c, COVER_HOPS) for c in centers))
    assert reach == set(range(inst.n))


@given(st.integers(0, 2**32 - 1), st.integers(4, 12), st.integers(1, 4))
def test_phase1_postconditions(seed, n, k):
    inst = random_asymmetric(seed, n, min(k, n))
    r = float(np.quantile(inst.dist[inst.dist > 0], 0.3))
    for state in (vishwanathan_state(inst, r), robust_asym_state(inst, r)):
        ccv = ccv_mask(state.graph)
        assert not (ccv & ~state.marked).any()
        assert np.array_equal(state.rederive_marked(), state.marked)
    # robust marking set is within two hops
    state = robust_asym_state(inst, r)
    two = state.graph.reach(2)
    for c, pts in state.marking_sets.items():
        assert all(two[c, p] for p in pts)


@given(st.integers(0, 2**32 - 1), st.integers(4, 12), st.integers(1, 4))
def test_robust_selection_order(seed, n, k):
    inst = random_asymmetric(seed, n, min(k, n))
    r = float(np.quantile(inst.dist[inst.dist > 0], 0.3))
    state = robust_asym_state(inst, r)
    prox = proximity_mask(state.graph, inst)
    marked = np.zeros(n, dtype=bool)
    for c, why in state.selection:
        open_prox = np.flatnonzero(prox & ~marked)
        if why == "ccv":
            assert len(open_prox) == 0
        else:
            assert c == open_prox[0]
        marked[list(state.marking_sets[c])] = True


@given(st.integers(0, 2**32 - 1), st.integers(4, 12), st.integers(1, 4))
def test_tiles_survive_final_assignment(seed, n, k):
    inst = random_asymmetric(seed, n, min(k, n))
    r = float(np.quantile(inst.dist[inst.dist > 0], 0.3))
    res, tiles = robust_asym_solve(inst, r)
    centers = res.clustering.centers
    for c, pts in tiles.items():
        pos = centers.index(c)
        assert all(res.clustering.assign[p] == pos for p in pts)


@pytest.mark.parametrize("seed", range(3))
def test_marking_contains_planted_cluster(seed):
    inst, planted, r_star = planted_asym(seed)
    for state in (vishwanathan_state(inst, r_star), robust_asym_state(inst, r_star)):
        for c in state.chosen:
            home = planted.assign[c]
            assert planted.clusters()[home] <= state.marking_sets[c]


@pytest.mark.parametrize("seed", range(3))
def test_robust_recovers_planted_asym(seed):
    inst, planted, r_star = planted_asym(seed)
    res, _ = robust_asym_solve(inst, r_star)
    assert closeness(res.clustering, planted)[1] == 0


def test_robust_mixed_superset_property():
    inst, planted, flags = gen_mixed(GenSpec(seed=3, sizes=(4, 4, 4), separation=6, noise=6, asymmetry=3.0))
    r_star = exact_solve(inst).cost
    res, _ = robust_asym_solve(inst, r_star)
    certified = [c for c, ok in zip(planted.clusters(), flags) if ok]
    assert certified
    for members in certified:
        holders = [out for out in res.clustering.clusters() if members <= out]
        assert len(holders) == 1
        assert all(not (other <= holders[0]) for other in certified if other != members)


@given(st.integers(0, 2**32 - 1), st.integers(3, 9), st.integers(1, 3))
def test_symmetric_feasible_at_and_above_optimum(seed, n, k):
    inst = Instance(random_points(np.random.default_rng(seed), n), min(k, n), "k-center")
    r_star = exact_solve(inst).cost
    for r in opt_radius_candidates(inst):
        if r < r_star:
            continue
        assert vishwanathan_solve(inst, float(r))[1]
        assert robust_asym_solve(inst, float(r))[0].meta["feasible"] == "true"


def test_symmetric_feasibility_can_differ_below_optimum():
    # proximity-first selection picks the point at 2 and covers all in one ball,
    # lowest-index selection needs points 0 and 5
    inst = Instance(line_dist([0, 2, 3, 5]), 1, "k-center")
    assert exact_solve(inst).cost == 3
    assert vishwanathan_solve(inst, 2.0)[1] is False
    assert robust_asym_solve(inst, 2.0)[0].meta["feasible"] == "true"


@given(st.integers(0, 2**32 - 1), st.integers(3, 10), st.integers(1, 3))
def test_radius_search_symmetric(seed, n, k):
    inst = Instance(random_points(np.random.default_rng(seed), n), min(k, n), "k-center")
    r_star = exact_solve(inst).cost
    for solver in ("plain", "robust"):
        res = radius_search(inst, solver)
        assert res.r <= r_star * (1 + 1e-9)
        assert res.radius <= 2 * r_star * (1 + 1e-9)


def test_radius_search_k_equals_n():
    inst = random_asymmetric(4, 5, 5)
    assert radius_search(inst).r == 0


def test_radius_search_strategies_agree_on_planted():
    inst, planted, r_star = planted_asym(1)
    a = radius_search(inst, "robust", "scan")
    b = radius_search(inst, "robust", "bisect")
    assert a.r <= r_star and b.r <= r_star


def _brute_tiebroken(inst, g, s):
    """Enumerate every hop-shortest path by DFS and keep the
    lexicographically smallest vertex sequence."""
    n = g.n
    hops = hop_distances(g, s)
    best = {}

    def walk(path):
        u = path[-1]
        if u not in best or path < best[u]:
            if len(path) - 1 == hops[u]:
                best[u] = list(path)
        for w in range(n):
            if g.adj[u, w] and hops[w] == len(path):
                walk(path + [w])

    walk([s])
    length = np.array(inst.dist[s], dtype=float)
    for v, path in best.items():
        length[v] = sum(inst.dist[a, b] for a, b in zip(path, path[1:]))
    return hops, length


@given(st.integers(0, 2**32 - 1), st.floats(1, 5))
def test_tiebroken_paths_match_dfs(seed, r):
    inst = random_asymmetric(seed, 7, 2)
    g = threshold_digraph(inst, r)
    s = seed % 7
    hops, length = tiebroken_paths(inst, g, s)
    bh, bl = _brute_tiebroken(inst, g, s)
    assert np.array_equal(hops, bh)
    np.testing.assert_allclose(length, bl, rtol=1e-12)


def directed_cycle(n, k):
    idx = np.arange(n)
    return asym((idx[None, :] - idx[:, None]) % n, k)


def test_phase2_on_directed_cycle():
    # no point is a CCV at r=1, so Phase II does all the work: greedy balls
    # of 5 hops cover 6 consecutive points each
    inst = directed_cycle(20, 4)
    g = threshold_digraph(inst, 1.0)
    assert not ccv_mask(g).any()
    state = vishwanathan_state(inst, 1.0)
    assert state.chosen == [] and state.phase2_rounds == 1
    assert state.A_sets[0] == frozenset(range(20))
    # 18 and 19 remain after 0, 6, 12; every start in 14..18 covers both
    assert state.A_sets[1] == frozenset({0, 6, 12, 14})
    assert state.feasible and state.centers == [0, 6, 12, 14]
    adj = g.adj.tolist()
    assert set().union(*(bfs_hops(adj, c, COVER_HOPS) for c in state.centers)) == set(range(20))
    res = plain_asym_solve(inst, 1.0)
    assert res.radius <= COVER_HOPS


def test_phase2_infeasible_budget():
    inst = directed_cycle(30, 2)
    centers, ok, rounds = vishwanathan_solve(inst, 1.0)
    assert not ok and len(centers) > 2 and rounds >= 1


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.integers(6, 20), st.integers(1, 4))
def test_digraph_metric_search(seed, n, k):
    inst = random_digraph_metric(seed, n, k, 0.1)
    for solver in ("plain", "robust"):
        res = radius_search(inst, solver)
        assert res.clustering.k <= k and res.meta["feasible"] == "true"
        assert res.meta["rounds"] <= log_star(n) + 3


def test_log_star():
    assert [log_star(x) for x in (1, 2, 4, 16, 500, 65536)] == [0, 1, 2, 3, 4, 4]

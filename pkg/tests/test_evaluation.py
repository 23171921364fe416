import itertools
import math

import numpy as np
import pytest
from scipy.stats import poisson

from prcm.evaluation import (LikelihoodContext, detect_partitions, flip_bad_count,
                             infer_from_revealed, info_flow_experiment, is_flip_bad,
                             log_likelihood, overlap, triangle_profile)
from prcm.geom import Metric
from prcm.model import ConnectionFunction as CF, MarkedPointSet, ModelParams, SpatialGraph, sample_coupled
from prcm.moments import triangle_deltas
from prcm.percolation import near_boundary

IND = CF.scaled_indicator


def test_overlap_examples():
    assert overlap([1, 1, -1, -1], [1, 1, -1, -1]) == 1.0
    assert overlap([-1, -1, 1, 1], [1, 1, -1, -1]) == 1.0
    assert overlap([1, 1, 1, 1], [1, 1, -1, -1]) == 0.0
    assert overlap([1, -1, 1, 1], [1, 1, 1, 1]) == 0.5
    assert overlap([], []) == 1.0
    with pytest.raises(ValueError):
        overlap([1], [1, 1])


def brute_log_likelihood(graph, labels, params):
    N = graph.n_nodes
    edges = set(zip(*(x.tolist() for x in graph.edges())))
    total = poisson.logpmf(N, params.lam * params.n) + N * math.log(1 / (2 * params.n))
    for i, j in itertools.combinations(range(N), 2):
        r = float(graph.dist(np.array([i]), np.array([j]))[0])
        f = params.f_in(r) if labels[i] == labels[j] else params.f_out(r)
        f = float(f)
        if (i, j) in edges:
            total += math.log(f) if f > 0 else -math.inf
        else:
            total += math.log1p(-f) if f < 1 else -math.inf
    return total


@pytest.fixture(scope="module")
def small():
    p = ModelParams(2.0, 2, 10.0, IND(0.8, 1.5), IND(0.3, 1.0))
    g = sample_coupled(p, 21, with_info=False)
    assert 10 <= g.n_nodes <= 35
    return p, g


def test_likelihood_matches_brute_force(small):
    p, g = small
    rng = np.random.default_rng(0)
    for labels in [g.labels, -g.labels, rng.choice([-1, 1], g.n_nodes)]:
        ctx = LikelihoodContext(g, labels, p)
        assert log_likelihood(ctx) == pytest.approx(brute_log_likelihood(g, labels, p), abs=1e-9)


def test_incremental_flip_matches_recomputation(small):
    p, g = small
    ctx = LikelihoodContext(g, g.labels, p)
    rng = np.random.default_rng(1)
    for i in rng.integers(0, g.n_nodes, 15):
        ctx.flip(int(i))
        fresh = LikelihoodContext(g, ctx.labels, p)
        assert np.allclose(ctx.node_current, fresh.node_current, atol=1e-12)
        assert np.allclose(ctx.node_flipped, fresh.node_flipped, atol=1e-12)
        assert log_likelihood(ctx) == pytest.approx(log_likelihood(fresh), abs=1e-9)


def test_flip_bad_agrees_with_brute_force(small):
    p, g = small
    labels = g.labels.copy()
    ctx = LikelihoodContext(g, labels, p)
    base = brute_log_likelihood(g, labels, p)
    expected = 0
    for i in range(g.n_nodes):
        alt = labels.copy()
        alt[i] = -alt[i]
        bad = brute_log_likelihood(g, alt, p) >= base - 1e-12
        assert is_flip_bad(ctx, i) == bad
        expected += bad
    assert flip_bad_count(ctx) == expected
    with pytest.raises(IndexError):
        is_flip_bad(ctx, g.n_nodes)


def graph_on(locs, labels, edges, n=100.0):
    pts = MarkedPointSet(np.asarray(locs, dtype=float), np.asarray(labels))
    return SpatialGraph.from_edges(pts, edges, Metric(), n)


def test_isolated_nodes_are_all_flip_bad():
    p = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(0, 1))
    g = graph_on([(0, 0), (3, 0), (0, 3), (-3, -3)], [1, -1, 1, 1], [])
    assert flip_bad_count(LikelihoodContext(g, g.labels, p)) == 4


def test_dense_fixture_has_no_flip_bad_nodes():
    p = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(0, 1))
    rng = np.random.default_rng(3)
    locs = rng.uniform(-1, 1, (30, 2))
    labels = np.where(locs[:, 0] < 0, 1, -1)
    edges = [(i, j) for i, j in itertools.combinations(range(30), 2)
             if labels[i] == labels[j] and np.linalg.norm(locs[i] - locs[j]) <= 1]
    g = graph_on(locs, labels, edges)
    assert all(g.degrees() > 0)
    assert flip_bad_count(LikelihoodContext(g, labels, p)) == 0


def test_corrupt_input_is_rejected():
    p = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(0, 1))
    far = graph_on([(0, 0), (3, 0)], [1, 1], [(0, 1)])
    with pytest.raises(ValueError, match="corrupt"):
        LikelihoodContext(far, far.labels, p)
    missing = graph_on([(0, 0), (0.5, 0)], [1, -1], [])
    assert log_likelihood(LikelihoodContext(missing, [1, 1], p)) == -math.inf
    full = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(1, 1))
    with pytest.raises(ValueError, match="corrupt"):
        LikelihoodContext(missing, missing.labels, full)
    with pytest.raises(ValueError):
        LikelihoodContext(missing, [1], p)


def test_flip_bad_count_grows_with_n():
    means = []
    for n in (200.0, 400.0, 800.0):
        p = ModelParams(0.5, 2, n, IND(0.9, 1), IND(0.1, 1))
        counts = [flip_bad_count(LikelihoodContext(g, g.labels, p))
                  for g in (sample_coupled(p, s, with_info=False) for s in range(8))]
        means.append(np.mean(counts))
    assert means[0] < means[1] < means[2]


def test_detect_partitions_edge_cases():
    p = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(0.2, 1))
    edgeless = graph_on([(0, 0), (0.3, 0), (0, 0.3)], [1, 1, -1], [])
    rep = detect_partitions(edgeless, 1.0, p, refs=(0.1, 0.05))
    assert rep.statistic == 0.0 and rep.decision == "null" and rep.nodes == 3
    with pytest.raises(ValueError, match="insufficient"):
        detect_partitions(graph_on([(4, 4)], [1], []), 1.0, p, refs=(0.1, 0.05))


def test_triangle_profile_counts_ordered_pairs():
    p = ModelParams(1.0, 2, 100.0, IND(1, 1), IND(0, 1))
    tri = graph_on([(0, 0), (0.5, 0), (0, 0.5)], [1, 1, 1], [(0, 1), (0, 2), (1, 2)])
    assert triangle_profile(tri, [0, 1, 2], p).tolist() == [2.0, 2.0, 2.0]


def test_equal_profiles_give_equal_references():
    d_g, d_h = triangle_deltas(IND(0.5, 1), IND(0.5, 1), 1.0, 2, samples=200_000)
    assert d_g == pytest.approx(d_h, abs=1e-12)


def test_statistic_converges_to_planted_reference():
    p = ModelParams(1.0, 2, 6400.0, IND(1, 1), IND(0.2, 1))
    refs = triangle_deltas(p.f_in, p.f_out, p.lam, 2)
    stats = [detect_partitions(sample_coupled(p, s, with_info=False), p.side / 2 - 1, p,
                               refs=refs).statistic for s in range(6)]
    assert np.mean(stats) == pytest.approx(refs[0], rel=0.03)
    assert abs(np.mean(stats) - refs[0]) < abs(np.mean(stats) - refs[1])


def test_revealed_labels_are_never_wrong():
    p = ModelParams(3.0, 2, 144.0, IND(0.8, 1), IND(0.2, 1))
    reached = 0
    for s in range(30):
        g = sample_coupled(p, s, planted=np.zeros((1, 2)))
        centre = int(g.points.planted[0])
        revealed = near_boundary(g, 2.0)
        revealed[centre] = False
        guess = infer_from_revealed(g, centre, revealed)
        if guess is not None:
            reached += 1
            assert guess == g.labels[centre]
    assert reached > 0


def test_info_flow_without_information_is_a_coin():
    p = ModelParams(2.0, 2, 100.0, IND(0.5, 1), IND(0.5, 1))
    res = info_flow_experiment(p, trials=300, seed=4, theta_trials=5)
    assert res.reach == 0.0 and res.theta == 0.0
    assert abs(res.success - 0.5) <= 3 * math.sqrt(0.25 / 300)
    assert isinstance(res.success, float)


def test_info_flow_success_tracks_reach():
    p = ModelParams(3.0, 2, 144.0, IND(1, 1), IND(0, 1))
    res = info_flow_experiment(p, trials=200, seed=5, theta_trials=20)
    assert res.reach > 0.2
    expected = 0.5 * (1 + res.reach)
    assert abs(res.success - expected) <= 3 * math.sqrt(0.25 * (1 - res.reach) / 200) + 1e-12
    assert res.theta_bound_check

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from prcm.geom import Metric
from prcm.model import ConnectionFunction as CF, MarkedPointSet, SpatialGraph, sample_marked, sample_null
from prcm.percolation import (cluster_analysis, cluster_labels, near_boundary, theta_estimate,
                              theta_sweep_coupled)

IND = CF.scaled_indicator


def graph_on(locs, edges, n=100.0):
    pts = MarkedPointSet(np.asarray(locs, dtype=float), np.ones(len(locs), dtype=int))
    return SpatialGraph.from_edges(pts, edges, Metric(), n)


def test_edgeless_and_complete():
    locs = [(0, 0), (1, 0), (4.9, 0), (0, -4.9)]
    empty = cluster_analysis(graph_on(locs, []), 0.5)
    assert empty.cluster_sizes.tolist() == [1, 1, 1, 1]
    assert empty.largest_fraction == 0.25 and not empty.origin_spans
    full = cluster_analysis(graph_on(locs, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]), 0.5)
    assert full.cluster_sizes.tolist() == [4]
    assert full.largest_fraction == 1.0 and full.origin_spans


def test_near_boundary_shell():
    g = graph_on([(0, 0), (4.0, 0), (0, -4.6)], [])
    assert near_boundary(g, 1.0).tolist() == [False, True, True]
    assert near_boundary(g, 0.5).tolist() == [False, False, True]


def test_union_find_matches_scipy_and_ignores_edge_order():
    pts = sample_marked(2.0, 2, 400.0, 5)
    g = sample_null(pts, IND(1, 1), Metric(), 5, 400.0)
    roots = cluster_labels(g)
    i, j = g.edges()
    adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(g.n_nodes, g.n_nodes))
    k, ref = connected_components(adj, directed=False)
    assert len(np.unique(roots)) == k
    assert len(set(zip(roots.tolist(), ref.tolist()))) == k
    perm = np.random.default_rng(0).permutation(len(i))
    shuffled = SpatialGraph.from_edges(pts, np.stack([j[perm], i[perm]], axis=1), Metric(), 400.0)
    other = cluster_labels(shuffled)
    assert len(set(zip(roots.tolist(), other.tolist()))) == k


def test_zero_profile_never_percolates():
    assert theta_estimate(5.0, CF.zero(), 2, trials=3) == (0.0, 0.0)


def test_subcritical_and_supercritical():
    low, _ = theta_estimate(0.2, IND(1, 1), 2, window_side=30, trials=60, seed=1)
    assert low <= 0.05
    high, _ = theta_estimate(3.0, IND(1, 1), 2, window_side=30, trials=40, seed=2)
    assert high > 0.5


def test_coupled_sweep_is_monotone_per_trial():
    lams = [0.5, 1.0, 1.5, 2.0, 3.0]
    est, hits = theta_sweep_coupled(lams, IND(1, 1), 2, window_side=20, trials=30, seed=3)
    assert hits.shape == (30, 5)
    assert np.all(np.diff(hits.astype(int), axis=1) >= 0)
    vals = [e for e, _ in est]
    assert vals == sorted(vals)


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        theta_estimate(1.0, IND(1, 1), 2, trials=0)

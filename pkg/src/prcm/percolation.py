"""Cluster statistics and finite-window estimates of the percolation probability."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geom import Metric
from .model import ConnectionFunction, SpatialGraph, mix_seed, sample_marked, sample_null, thin


@dataclass
class ClusterStats:
    cluster_sizes: np.ndarray
    largest_fraction: float
    origin_spans: bool
    origin_cluster_size: int = 0


def cluster_labels(graph: SpatialGraph, info: bool = False) -> np.ndarray:
    """Union-find root of every node over G (or over I with ``info``)."""
    i, j = graph.info_edges() if info else graph.edges()
    return _kernels.union_find(graph.n_nodes, i, j)


def origin_node(graph: SpatialGraph) -> int:
    """The planted node if there is one, else the node closest to the centre."""
    if len(graph.points.planted):
        return int(graph.points.planted[0])
    return 0


def near_boundary(graph: SpatialGraph, shell: float) -> np.ndarray:
    half = graph.side / 2
    return np.max(np.abs(graph.locations), axis=1) >= half - shell


def cluster_analysis(graph: SpatialGraph, boundary_shell: float, info: bool = False) -> ClusterStats:
    if graph.n_nodes == 0:
        return ClusterStats(np.zeros(0, dtype=np.int64), 0.0, False)
    roots = cluster_labels(graph, info)
    _, sizes = np.unique(roots, return_counts=True)
    origin = origin_node(graph)
    members = roots == roots[origin]
    spans = bool(np.any(members & near_boundary(graph, boundary_shell)))
    return ClusterStats(np.sort(sizes)[::-1], float(sizes.max() / graph.n_nodes), spans,
                        int(members.sum()))


def _binomial(successes, trials):
    p = successes / trials
    return p, math.sqrt(p * (1 - p) / trials)


def _palm_sample(lam, g, d, window_side, seed):
    pts = sample_marked(lam, d, window_side ** d, seed, planted=np.zeros((1, d)))
    return sample_null(pts, g, Metric(), seed, window_side ** d)


def theta_estimate(lam: float, g: ConnectionFunction, d: int, window_side: float | None = None,
                   trials: int = 200, seed: int = 0, boundary_shell: float | None = None):
    """Fraction of Palm samples whose origin cluster reaches the boundary shell."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    radius = g.support
    if radius == 0:
        return 0.0, 0.0
    window_side = 40 * radius if window_side is None else window_side
    shell = radius if boundary_shell is None else boundary_shell
    hits = 0
    for t in range(trials):
        graph = _palm_sample(lam, g, d, window_side, _trial_seed(seed, t))
        hits += cluster_analysis(graph, shell).origin_spans
    return _binomial(hits, trials)


def theta_sweep_coupled(lams, g: ConnectionFunction, d: int, window_side: float | None = None,
                        trials: int = 200, seed: int = 0, boundary_shell: float | None = None):
    """theta estimates for several intensities from nested thinnings of one sample per trial.

    Every trial samples at the largest intensity and thins to the others, so
    per-trial spanning indicators are monotone in lambda.
    """
    lams = [float(x) for x in lams]
    radius = g.support
    window_side = 40 * radius if window_side is None else window_side
    shell = radius if boundary_shell is None else boundary_shell
    top = max(lams)
    hits = np.zeros((trials, len(lams)), dtype=bool)
    if radius == 0 or top == 0:
        return [(0.0, 0.0) for _ in lams], hits
    for t in range(trials):
        s = _trial_seed(seed, t)
        base = _palm_sample(top, g, d, window_side, s)
        for k, lam in enumerate(lams):
            graph = thin(base, lam / top, s, keep=[origin_node(base)])
            hits[t, k] = cluster_analysis(graph, shell).origin_spans
    return [_binomial(int(h), trials) for h in hits.sum(axis=0)], hits


def _trial_seed(seed, t):
    return mix_seed(seed, 0x7E7A, t)

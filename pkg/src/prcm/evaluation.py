"""Outcome metrics and statistical tests: overlap, likelihood and Flip-Bad
nodes, the triangle distinguishability statistic and information flow."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (ModelParams, SpatialGraph, candidate_pairs, mix_seed,
                    sample_coupled)
from .moments import TriangleWeight, triangle_deltas, triangle_weight
from .percolation import near_boundary, origin_node, theta_estimate


def overlap(estimates, truth) -> float:
    """|sum tau_i Z_i| / N, defined as 1 for an empty sample."""
    est = np.asarray(estimates, dtype=np.int64)
    tru = np.asarray(truth, dtype=np.int64)
    if est.shape != tru.shape:
        raise ValueError("estimates and truth must have equal length")
    if est.size == 0:
        return 1.0
    return abs(int(np.dot(est, tru))) / est.size


class LikelihoodContext:
    """Log-likelihood of a labelling given the graph, with per-node caches.

    Every pair within the support of f_in contributes log f or log(1 - f),
    with f = f_in for equal labels and f_out otherwise; pairs farther apart
    contribute 0. Probability-0 factors appear as -inf.
    """

    def __init__(self, graph: SpatialGraph, labels, params: ModelParams):
        self.graph = graph
        self.params = params
        self.labels = np.array(labels, dtype=np.int8)
        if len(self.labels) != graph.n_nodes:
            raise ValueError("one label per node is required")
        N = graph.n_nodes
        i, j, dist = candidate_pairs(graph.locations, params.support, graph.metric)
        ei, ej = graph.edges()
        fin_e = params.f_in(graph.dist(ei, ej)) if len(ei) else np.zeros(0)
        fout_e = params.f_out(graph.dist(ei, ej)) if len(ei) else np.zeros(0)
        if np.any((fin_e == 0) & (fout_e == 0)):
            raise ValueError("corrupt input: edge between nodes that cannot be adjacent")
        edge_keys = ei * max(N, 1) + ej
        has_edge = np.isin(i * max(N, 1) + j, edge_keys)
        fin, fout = params.f_in(dist), params.f_out(dist)
        if np.any(~has_edge & (fin == 1) & (fout == 1)):
            raise ValueError("corrupt input: missing edge between nodes that must be adjacent")
        with np.errstate(divide="ignore"):
            self.t_same = np.where(has_edge, np.log(fin), np.log1p(-fin))
            self.t_diff = np.where(has_edge, np.log(fout), np.log1p(-fout))
        self.pi, self.pj = i, j
        # incidence lists over pair indices
        owner = np.concatenate([i, j])
        order = np.argsort(owner, kind="stable")
        self._inc = np.concatenate([np.arange(len(i)), np.arange(len(i))])[order]
        self._inc_ptr = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(owner, minlength=N), out=self._inc_ptr[1:])
        lam, n = params.lam, params.n
        if N == 0:
            self.prefix = -lam * n
        elif lam == 0:
            self.prefix = -math.inf
        else:
            self.prefix = -lam * n + N * math.log(lam * n) - math.lgamma(N + 1) + N * math.log(1 / (2 * n))
        self._refresh()

    def _terms(self):
        same = self.labels[self.pi] == self.labels[self.pj]
        cur = np.where(same, self.t_same, self.t_diff)
        alt = np.where(same, self.t_diff, self.t_same)
        return cur, alt

    def _refresh(self):
        N = self.graph.n_nodes
        cur, alt = self._terms()
        self.pair_current = cur
        self.node_current = np.bincount(self.pi, cur, N) + np.bincount(self.pj, cur, N)
        self.node_flipped = np.bincount(self.pi, alt, N) + np.bincount(self.pj, alt, N)

    def incident(self, i: int) -> np.ndarray:
        return self._inc[self._inc_ptr[i]:self._inc_ptr[i + 1]]

    def flip(self, i: int) -> None:
        """Negate label i and update the caches of i and its pair partners."""
        self.labels[i] = -self.labels[i]
        pairs = self.incident(i)
        partners = np.concatenate([[i], np.where(self.pi[pairs] == i, self.pj[pairs], self.pi[pairs])])
        same = self.labels[self.pi] == self.labels[self.pj]
        for k in partners:
            inc = self.incident(k)
            s = same[inc]
            self.node_current[k] = np.sum(np.where(s, self.t_same[inc], self.t_diff[inc]))
            self.node_flipped[k] = np.sum(np.where(s, self.t_diff[inc], self.t_same[inc]))
        self.pair_current[pairs] = np.where(same[pairs], self.t_same[pairs], self.t_diff[pairs])


def log_likelihood(ctx: LikelihoodContext) -> float:
    return float(ctx.prefix + np.sum(ctx.pair_current))


def is_flip_bad(ctx: LikelihoodContext, i: int) -> bool:
    """True when negating Z_i does not lower the likelihood (ties count)."""
    if not 0 <= i < ctx.graph.n_nodes:
        raise IndexError(f"unknown node id {i}")
    return bool(ctx.node_flipped[i] >= ctx.node_current[i])


def flip_bad_count(ctx: LikelihoodContext) -> int:
    return int(np.count_nonzero(ctx.node_flipped >= ctx.node_current))


@dataclass
class DistinguishReport:
    statistic: float
    delta_G_ref: float
    delta_H_ref: float
    decision: str
    nodes: int = 0


def triangle_profile(graph: SpatialGraph, centres, params: ModelParams,
                     h_spec: TriangleWeight | None = None) -> np.ndarray:
    """h-weighted count of ordered neighbour pairs forming a triangle, per centre."""
    if h_spec is None:
        h_spec = TriangleWeight(params.support)
    centres = np.asarray(centres, dtype=np.int64)
    tri = _kernels.ordered_triangles(graph.indptr, graph.indices, centres)
    out = np.zeros(len(centres))
    if len(tri) == 0:
        return out
    i, j, k = tri.T
    w = triangle_weight(h_spec, params.f_in, params.f_out,
                        graph.dist(i, j), graph.dist(i, k), graph.dist(j, k))
    pos = np.searchsorted(centres, i) if np.all(np.diff(centres) > 0) else None
    if pos is None:
        lookup = {c: n for n, c in enumerate(centres.tolist())}
        pos = np.array([lookup[c] for c in i.tolist()], dtype=np.int64)
    np.add.at(out, pos, w.astype(float))
    return out


def detect_partitions(graph: SpatialGraph, L: float, params: ModelParams,
                      h_spec: TriangleWeight | None = None, refs=None) -> DistinguishReport:
    """Windowed triangle statistic and the nearest-reference decision.

    The window is the cube of half-side L around the origin. ``refs`` takes
    precomputed (delta_G, delta_H); otherwise they are integrated here.
    """
    centres = np.flatnonzero(np.max(np.abs(graph.locations), axis=1) <= L)
    if len(centres) == 0:
        raise ValueError("insufficient data: no nodes within the window")
    if refs is None:
        refs = triangle_deltas(params.f_in, params.f_out, params.lam, params.d, h_spec)
    d_g, d_h = refs
    stat = float(triangle_profile(graph, centres, params, h_spec).sum() / len(centres))
    decision = "planted" if abs(stat - d_g) < abs(stat - d_h) else "null"
    return DistinguishReport(stat, d_g, d_h, decision, len(centres))


def information_graph_profile(params: ModelParams):
    """The connection profile f_in - f_out of the information graph."""
    return params.f_in.combine(params.f_out, operator.sub)


def infer_from_revealed(graph: SpatialGraph, centre: int, revealed: np.ndarray):
    """Centre label implied by the revealed labels through I, or None if unreachable.

    Walks the I-path from the first revealed node of the centre's I-component
    back to the centre; each step keeps the label across a G-edge and flips it
    otherwise.
    """
    comp, parent = _kernels.component_of(graph.info_indptr, graph.info_indices, centre)
    hit = comp[revealed[comp]]
    if len(hit) == 0:
        return None
    v = int(hit[0])
    label = int(graph.labels[v])
    while v != centre:
        p = int(parent[v])
        label = label if _kernels.lookup_edge(graph.indptr, graph.indices, v, p) else -label
        v = p
    return label


@dataclass
class InfoFlowResult:
    success: float
    stderr: float
    reach: float
    theta: float
    theta_stderr: float
    theta_bound_check: bool


def info_flow_experiment(params: ModelParams, r: float | None = None, trials: int = 200,
                         seed: int = 0, theta=None, theta_trials: int | None = None) -> InfoFlowResult:
    """Guess the planted centre's label from labels revealed at sup-distance >= r.

    ``theta`` may pass a precomputed (estimate, stderr) for the information
    graph profile on the same window and shell.
    """
    d = params.d
    side = params.side
    r = side / 2 - params.support if r is None else r
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 0x1F])
    wins = reached = 0
    for t in range(trials):
        graph = sample_coupled(params, mix_seed(seed, 0x1F10, t), planted=np.zeros((1, d)))
        centre = origin_node(graph)
        revealed = near_boundary(graph, side / 2 - r)
        revealed[centre] = False
        guess = infer_from_revealed(graph, centre, revealed)
        if guess is None:
            guess = 1 if rng.random() < 0.5 else -1
        else:
            reached += 1
        wins += guess == graph.labels[centre]
    success = float(wins / trials)
    se = math.sqrt(success * (1 - success) / trials)
    if theta is None:
        theta = theta_estimate(params.lam, information_graph_profile(params), d, side,
                               theta_trials or trials, mix_seed(seed, 0x7E7A),
                               boundary_shell=side / 2 - r)
    th, th_se = theta
    sigma = math.sqrt(se ** 2 + (th_se / 2) ** 2)
    ok = success <= 0.5 * (1 + th) + 3 * sigma
    return InfoFlowResult(success, se, reached / trials, th, th_se, bool(ok))

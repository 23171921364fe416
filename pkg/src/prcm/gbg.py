"""Good-Bad-Grid clustering: pairwise classification, cell consistency tests,
A-Good components and label propagation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .geom import GridSpec, cells_of, neighbour_offsets
from .model import SpatialGraph, ModelParams
from .moments import eval_m


def grid_for(params: ModelParams, R: float | None = None) -> GridSpec:
    return GridSpec(params.support if R is None else R, params.d)


def _period(graph: SpatialGraph) -> float:
    return float(graph.metric.side) if graph.metric.periodic else 0.0


def count_common_neighbors(graph: SpatialGraph, i: int, j: int, R: float) -> int:
    """Common neighbours of i and j lying strictly within R of both."""
    if i == j:
        raise ValueError("count_common_neighbors needs two distinct nodes")
    common = np.intersect1d(graph.neighbors(i), graph.neighbors(j), assume_unique=True)
    if len(common) == 0:
        return 0
    loc = graph.locations
    near_i = graph.metric.norm_between(loc[common], loc[i]) < R
    near_j = graph.metric.norm_between(loc[common], loc[j]) < R
    return int(np.count_nonzero(near_i & near_j))


def _threshold_fn(params: ModelParams, R: float):
    """dist -> (lambda/4)(M_in + M_out); tabulated for d > 3 where M is sampled."""
    scale = params.lam / 4

    def exact(dist):
        m = eval_m(params.f_in, params.f_out, params.d, R, dist)
        return scale * (np.asarray(m.m_in) + np.asarray(m.m_out))

    if params.d <= 3:
        return exact
    grid = np.linspace(0.0, 2 * R, 129)
    table = exact(grid)
    return lambda dist: np.interp(dist, grid, table)


def pair_threshold(params: ModelParams, dist, R: float | None = None):
    R = params.support if R is None else R
    return _threshold_fn(params, R)(np.asarray(dist, dtype=float))


def pairwise_classify(graph: SpatialGraph, i: int, j: int, params: ModelParams,
                      R: float | None = None) -> int:
    """+1 if the common-neighbour count strictly exceeds the midpoint threshold."""
    R = params.support if R is None else R
    count = count_common_neighbors(graph, i, j, R)
    return 1 if count > float(pair_threshold(params, graph.dist(i, j), R)) else -1


def classify_pairs(graph: SpatialGraph, params: ModelParams, pi, pj, R: float | None = None):
    """Vectorised pairwise classification; returns (signs, counts)."""
    R = params.support if R is None else R
    pi = np.asarray(pi, dtype=np.int64)
    pj = np.asarray(pj, dtype=np.int64)
    if len(pi) == 0:
        return np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int64)
    counts = _kernels.common_counts(
        graph.indptr, graph.indices, graph.locations, _period(graph), float(R), pi, pj
    )
    thr = _threshold_fn(params, R)(graph.dist(pi, pj))
    return np.where(counts > thr, 1, -1).astype(np.int8), counts


def min_cell_count(params: ModelParams, R: float, epsilon: float) -> float:
    d = params.d
    return max(params.lam * (R / 4) ** d / d * (1 - epsilon), 1.0)


def signed_clique_balanced(nodes, sign) -> bool:
    """True iff the complete signed graph on ``nodes`` has no negative cycle.

    Colours every node relative to the first one and checks all other pairs.
    """
    nodes = list(nodes)
    if len(nodes) < 3:
        return True
    ref = nodes[0]
    colour = {ref: 1}
    for v in nodes[1:]:
        colour[v] = sign(ref, v)
    for a in range(1, len(nodes)):
        for b in range(a + 1, len(nodes)):
            u, v = nodes[a], nodes[b]
            if sign(u, v) != colour[u] * colour[v]:
                return False
    return True


def _nodes_by_cell(graph: SpatialGraph, grid: GridSpec):
    coords = cells_of(grid, graph.locations)
    return {tuple(c): [] for c in coords}, coords


def _thickening_nodes(graph, grid, cell):
    coords = cells_of(grid, graph.locations)
    cell = np.asarray(cell)
    own = np.flatnonzero(np.all(coords == cell, axis=1))
    near = np.flatnonzero(np.max(np.abs(coords - cell), axis=1) <= 1)
    return own, near


@dataclass
class CellDiagnostic:
    count: int
    min_count: float
    nodes: list
    reason: str


def is_a_good(graph: SpatialGraph, grid: GridSpec, cell, params: ModelParams,
              epsilon: float = 0.1, classify=None, diagnostic: bool = False):
    """A-Good test for one cell: count condition plus sign balance on its 1-thickening.

    ``classify(i, j)`` defaults to :func:`pairwise_classify` at the grid scale.
    """
    own, near = _thickening_nodes(graph, grid, cell)
    need = min_cell_count(params, grid.R, epsilon)
    if classify is None:
        def classify(i, j):
            return pairwise_classify(graph, i, j, params, grid.R)
    if len(own) < need:
        ok, reason = False, "count"
    else:
        ok = signed_clique_balanced(near.tolist(), classify)
        reason = "balanced" if ok else "negative cycle"
    if diagnostic:
        return ok, CellDiagnostic(len(own), need, near.tolist(), reason)
    return ok


def is_t_good(graph: SpatialGraph, truth, grid: GridSpec, cell, params: ModelParams,
              epsilon: float = 0.1, classify=None) -> bool:
    own, near = _thickening_nodes(graph, grid, cell)
    if len(own) < min_cell_count(params, grid.R, epsilon):
        return False
    truth = np.asarray(truth)
    if classify is None:
        def classify(i, j):
            return pairwise_classify(graph, i, j, params, grid.R)
    near = near.tolist()
    for a in range(len(near)):
        for b in range(a + 1, len(near)):
            u, v = near[a], near[b]
            if classify(u, v) != truth[u] * truth[v]:
                return False
    return True


@dataclass
class CellVerdict:
    cell: tuple
    a_good: bool
    t_good: bool | None
    local_nodes: list


@dataclass
class GbgResult:
    estimates: np.ndarray
    component_of: np.ndarray
    cells: np.ndarray
    a_good: np.ndarray
    t_good: np.ndarray | None
    cell_ptr: np.ndarray
    cell_nodes: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def cell_verdicts(self) -> list:
        out = []
        for c in range(len(self.cells)):
            nodes = self.cell_nodes[self.cell_ptr[c]:self.cell_ptr[c + 1]].tolist()
            t = None if self.t_good is None else bool(self.t_good[c])
            out.append(CellVerdict(tuple(int(x) for x in self.cells[c]), bool(self.a_good[c]), t, nodes))
        return out


class CellIndex:
    """Sparse index of occupied cells with neighbour tables."""

    def __init__(self, coords: np.ndarray):
        self.cells, inv = np.unique(coords, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        self.node_cell = inv
        self.cell_nodes = np.argsort(inv, kind="stable").astype(np.int64)
        self.cell_ptr = np.zeros(len(self.cells) + 1, dtype=np.int64)
        np.cumsum(np.bincount(inv, minlength=len(self.cells)), out=self.cell_ptr[1:])
        d = coords.shape[1]
        self._lo = self.cells.min(axis=0) - 3
        self._span = self.cells.max(axis=0) - self._lo + 4
        self._keys = self._encode(self.cells)
        self.d = d

    def _encode(self, cells):
        key = np.zeros(len(cells), dtype=np.int64)
        for k in range(cells.shape[1]):
            key = key * self._span[k] + (cells[:, k] - self._lo[k])
        return key

    def neighbour_table(self, k: int) -> np.ndarray:
        offsets = neighbour_offsets(self.d, k)
        table = np.empty((len(self.cells), len(offsets)), dtype=np.int64)
        for t, off in enumerate(offsets):
            keys = self._encode(self.cells + off)
            pos = np.searchsorted(self._keys, keys)
            pos = np.minimum(pos, len(self._keys) - 1)
            table[:, t] = np.where(self._keys[pos] == keys, pos, -1)
        return table


def _pair_lookup(n_nodes, pi, pj, signs):
    src = np.concatenate([pi, pj])
    dst = np.concatenate([pj, pi])
    val = np.concatenate([signs, signs]).astype(np.int8)
    order = np.argsort(src * max(n_nodes, 1) + dst)
    ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_nodes), out=ptr[1:])
    return ptr, dst[order], val[order]


def run_gbg(graph: SpatialGraph, params: ModelParams, epsilon: float = 0.1,
            R: float | None = None, traversal_seed: int | None = None,
            truth=None) -> GbgResult:
    """Good-Bad-Grid clustering of ``graph``.

    Cells are visited breadth-first within each A-Good component. With
    ``traversal_seed`` the start cells, neighbour order and anchors are
    randomised; the resulting partition is unchanged up to a flip per
    component. ``truth`` additionally records T-Good flags.
    """
    grid = grid_for(params, R)
    N = graph.n_nodes
    d = params.d
    if N == 0:
        empty = np.zeros(0, dtype=np.int64)
        return GbgResult(np.zeros(0, dtype=np.int8), empty, np.zeros((0, d), dtype=np.int64),
                         np.zeros(0, dtype=bool), None, np.zeros(1, dtype=np.int64), empty,
                         {"occupied_cells": 0, "a_good_cells": 0, "components": 0,
                          "largest_component_nodes": 0})
    index = CellIndex(cells_of(grid, graph.locations))
    nbr1 = index.neighbour_table(1)
    nbr2 = index.neighbour_table(2)
    pi, pj = _kernels.cell_pairs(index.cell_ptr, index.cell_nodes, nbr2)
    signs, _ = classify_pairs(graph, params, pi, pj, grid.R)
    pptr, pidx, pval = _pair_lookup(N, pi, pj, signs)
    need = min_cell_count(params, grid.R, epsilon)
    dummy = np.zeros(1, dtype=np.int8)
    good = _kernels.cell_verdicts(index.cell_ptr, index.cell_nodes, nbr1, need,
                                  pptr, pidx, pval, dummy, False)
    t_good = None
    if truth is not None:
        t_good = _kernels.cell_verdicts(index.cell_ptr, index.cell_nodes, nbr1, need,
                                        pptr, pidx, pval, np.asarray(truth, dtype=np.int8), True)
    K = len(index.cells)
    anchor = index.cell_nodes[index.cell_ptr[:-1]].copy()
    start = np.arange(K, dtype=np.int64)
    if traversal_seed is not None:
        rng = np.random.default_rng(traversal_seed)
        start = rng.permutation(K).astype(np.int64)
        nbr1 = nbr1[:, rng.permutation(nbr1.shape[1])]
        sizes = np.diff(index.cell_ptr)
        anchor = index.cell_nodes[index.cell_ptr[:-1] + (rng.random(K) * sizes).astype(np.int64)]
    est, comp_node, comp_cell, n_comp = _kernels.propagate(
        good, nbr1, start, anchor, index.cell_ptr, index.cell_nodes, pptr, pidx, pval, N
    )
    comp_sizes = np.bincount(comp_node[comp_node >= 0], minlength=max(n_comp, 1))
    stats = {
        "occupied_cells": int(K),
        "a_good_cells": int(good.sum()),
        "components": int(n_comp),
        "largest_component_nodes": int(comp_sizes.max()) if n_comp else 0,
    }
    if t_good is not None:
        stats["t_good_cells"] = int(t_good.sum())
    return GbgResult(est, comp_node, index.cells, good, t_good, index.cell_ptr,
                     index.cell_nodes, stats)


def a_good_components(result: GbgResult, d: int):
    """Connected components of the A-Good cells under sup-norm adjacency (scipy oracle)."""
    cells = result.cells[result.a_good]
    if len(cells) == 0:
        return np.zeros(0, dtype=np.int64)
    index = CellIndex(cells)
    table = index.neighbour_table(1)
    rows = np.repeat(np.arange(len(cells)), table.shape[1])
    cols = table.reshape(-1)
    ok = cols >= 0
    adj = coo_matrix((np.ones(ok.sum()), (rows[ok], cols[ok])), shape=(len(cells), len(cells)))
    _, labels = connected_components(adj, directed=False)
    out = np.empty(len(cells), dtype=np.int64)
    # CellIndex sorts the cells the same way GbgResult stores them
    out[:] = labels
    return out

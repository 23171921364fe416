"""Marked Poisson sampling of the planted graph G, the null graph H and the
information graph I, all driven by one hashed uniform per node pair."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geom import EUCLIDEAN, TOROIDAL, Metric, ball_volume

SPARSE = "sparse_euclidean"
LOG_TORUS = "log_torus"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_ODD = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix_seed(*parts) -> int:
    """Fold integers into one 64-bit seed (splitmix64 chain)."""
    h = np.array([0x243F6A8885A308D3], dtype=np.uint64)
    for p in parts:
        h = _mix64(h ^ (np.array([int(p) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN))
    return int(h[0])


def edge_uniforms(seed: int, i, j) -> np.ndarray:
    """Vectorised counter-based uniforms U(seed, min(i,j), max(i,j)) in [0, 1)."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if np.any(i == j):
        raise ValueError("edge uniforms are defined for distinct nodes only")
    lo = np.minimum(i, j).astype(np.uint64)
    hi = np.maximum(i, j).astype(np.uint64)
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        h = _mix64(s + _GOLDEN * (lo + np.uint64(1)))
        h = _mix64(h ^ (_ODD * (hi + np.uint64(1))))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def edge_uniform(seed: int, i: int, j: int) -> float:
    return float(edge_uniforms(seed, [i], [j])[0])


@dataclass(frozen=True)
class ConnectionFunction:
    """Piecewise-constant radial profile.

    ``levels[k]`` applies on ``(radii[k-1], radii[k]]`` (with ``radii[-1] = 0``
    and the first piece closed at 0); the value is 0 beyond ``radii[-1]``.
    """

    radii: tuple
    levels: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        v = np.asarray(self.levels, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size == 0:
            raise ValueError("radii and levels must be equal-length, non-empty")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be positive and strictly increasing")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("connection values must lie in [0, 1]")
        object.__setattr__(self, "radii", tuple(float(x) for x in r))
        object.__setattr__(self, "levels", tuple(float(x) for x in v))

    @classmethod
    def scaled_indicator(cls, level: float, radius: float) -> "ConnectionFunction":
        return cls((radius,), (level,))

    @classmethod
    def radial_table(cls, breakpoints, values) -> "ConnectionFunction":
        return cls(tuple(breakpoints), tuple(values))

    @classmethod
    def zero(cls) -> "ConnectionFunction":
        return cls((1.0,), (0.0,))

    @property
    def support(self) -> float:
        nz = [r for r, v in zip(self.radii, self.levels) if v > 0]
        return max(nz) if nz else 0.0

    @property
    def is_indicator(self) -> bool:
        return len(self.radii) == 1

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        table = np.append(np.asarray(self.levels), 0.0)
        return table[np.searchsorted(np.asarray(self.radii), r, side="left")][()]

    def integral(self, d: int) -> float:
        """Exact value of the integral of f(|x|) over R^d."""
        r = np.asarray(self.radii)
        shells = ball_volume(d) * np.diff(np.concatenate(([0.0], r ** d)))
        return float(np.dot(shells, self.levels))

    def combine(self, other: "ConnectionFunction", op) -> "ConnectionFunction":
        """Pointwise ``op(self, other)`` on the merged breakpoints.

        Values produced by ``op`` are kept as-is, so the result may leave
        [0, 1]; use :meth:`pieces` for such intermediate tables.
        """
        radii, levels = self.pieces(other, op)
        return ConnectionFunction(tuple(radii), tuple(np.clip(levels, 0.0, 1.0)))

    def pieces(self, other: "ConnectionFunction", op):
        radii = np.union1d(self.radii, other.radii)
        return radii, op(self(radii), other(radii))

    def truncate(self, R: float) -> "ConnectionFunction":
        radii = [r for r in self.radii if r < R] + [R]
        return ConnectionFunction(tuple(radii), tuple(self(np.asarray(radii))))


def difference_integral(f_in: ConnectionFunction, f_out: ConnectionFunction, d: int) -> float:
    radii, diff = f_in.pieces(f_out, operator.sub)
    shells = ball_volume(d) * np.diff(np.concatenate(([0.0], radii ** d)))
    return float(np.dot(shells, diff))


def average_function(f_in: ConnectionFunction, f_out: ConnectionFunction) -> ConnectionFunction:
    """The equal-degree null profile (f_in + f_out) / 2."""
    return f_in.combine(f_out, lambda x, y: (x + y) / 2)


@dataclass(frozen=True)
class ModelParams:
    lam: float
    d: int
    n: float
    f_in: ConnectionFunction
    f_out: ConnectionFunction
    regime: str = SPARSE

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError("d must be a positive integer")
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.regime not in (SPARSE, LOG_TORUS):
            raise ValueError(f"unknown regime {self.regime!r}")
        radii, diff = self.f_in.pieces(self.f_out, operator.sub)
        if np.any(diff < 0):
            raise ValueError("f_in must dominate f_out at every radius")
        if self.regime == LOG_TORUS:
            rad = math.log(self.n) ** (1 / self.d) if self.n > 1 else 0.0
            for f in (self.f_in, self.f_out):
                if not f.is_indicator or not math.isclose(f.radii[0], rad, rel_tol=1e-9):
                    raise ValueError(
                        "log_torus regime needs indicators of radius log(n)^(1/d)"
                    )

    @classmethod
    def log_regime(cls, lam: float, a: float, b: float, d: int, n: float) -> "ModelParams":
        rad = math.log(n) ** (1 / d)
        return cls(
            lam,
            d,
            n,
            ConnectionFunction.scaled_indicator(a, rad),
            ConnectionFunction.scaled_indicator(b, rad),
            LOG_TORUS,
        )

    @property
    def side(self) -> float:
        return self.n ** (1 / self.d)

    @property
    def metric(self) -> Metric:
        if self.regime == LOG_TORUS:
            return Metric(TOROIDAL, self.side)
        return Metric(EUCLIDEAN)

    @property
    def support(self) -> float:
        return self.f_in.support

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(lam, self.d, self.n, self.f_in, self.f_out, self.regime)


@dataclass
class MarkedPointSet:
    locations: np.ndarray
    labels: np.ndarray
    planted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.locations.ndim != 2 or len(self.locations) != len(self.labels):
            raise ValueError("locations must be (N, d) with one label per point")
        if np.any(np.abs(self.labels) != 1):
            raise ValueError("labels must be +1 or -1")

    @property
    def count(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.locations.shape[1]


def _csr(n_nodes, i, j):
    """Symmetric CSR with sorted neighbour lists from an undirected pair list."""
    n = max(int(n_nodes), 1)
    key = np.concatenate([i * n + j, j * n + i]).astype(np.int64)
    key.sort()
    src, dst = np.divmod(key, n)
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_nodes), out=indptr[1:])
    return indptr, dst


def _upper_pairs(indptr, indices):
    src = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    keep = src < indices
    return src[keep], indices[keep]


@dataclass
class SpatialGraph:
    points: MarkedPointSet
    indptr: np.ndarray
    indices: np.ndarray
    metric: Metric
    n: float
    info_indptr: np.ndarray | None = None
    info_indices: np.ndarray | None = None

    @classmethod
    def from_edges(cls, points, edges, metric, n, info_edges=None):
        k = points.count
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        if e.size and (e.min() < 0 or e.max() >= k):
            raise ValueError("edge endpoint out of range")
        e = np.unique(np.sort(e, axis=1), axis=0)
        indptr, indices = _csr(k, e[:, 0], e[:, 1])
        g = cls(points, indptr, indices, metric, n)
        if info_edges is not None:
            f = np.unique(np.sort(np.asarray(info_edges, dtype=np.int64).reshape(-1, 2), axis=1), axis=0)
            g.info_indptr, g.info_indices = _csr(k, f[:, 0], f[:, 1])
        return g

    @property
    def n_nodes(self) -> int:
        return self.points.count

    @property
    def d(self) -> int:
        return self.points.d

    @property
    def side(self) -> float:
        return self.n ** (1 / self.d)

    @property
    def labels(self) -> np.ndarray:
        return self.points.labels

    @property
    def locations(self) -> np.ndarray:
        return self.points.locations

    @property
    def has_info(self) -> bool:
        return self.info_indptr is not None

    def _check(self, i):
        if not 0 <= i < self.n_nodes:
            raise IndexError(f"unknown node id {i}")

    def neighbors(self, i: int) -> np.ndarray:
        self._check(i)
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def info_neighbors(self, i: int) -> np.ndarray:
        self._check(i)
        return self.info_indices[self.info_indptr[i]:self.info_indptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self):
        return _upper_pairs(self.indptr, self.indices)

    def info_edges(self):
        return _upper_pairs(self.info_indptr, self.info_indices)

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def dist(self, i, j):
        loc = self.points.locations
        return self.metric.norm_between(loc[i], loc[j])


def _node_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream])


def _edge_seed(seed: int, stream: int) -> int:
    return mix_seed(seed, 0xE06E, stream)


def _center_order(locations: np.ndarray) -> np.ndarray:
    if len(locations) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argsort(np.max(np.abs(locations), axis=1), kind="stable")


def sample_marked(lam: float, d: int, n: float, seed: int, planted=None,
                  planted_labels=None) -> MarkedPointSet:
    """Poisson(lam n) uniform points on the cube B_n with i.i.d. uniform labels.

    ``planted`` adds fixed extra locations (Palm-style); their labels are drawn
    like everyone else's unless ``planted_labels`` is given. Ids follow the
    sup-norm distance from the window center.
    """
    rng = _node_rng(seed, 1)
    side = n ** (1 / d)
    count = rng.poisson(lam * n)
    locs = rng.uniform(-side / 2, side / 2, size=(count, d))
    labels = rng.choice(np.array([-1, 1], dtype=np.int8), size=count)
    n_planted = 0
    if planted is not None:
        planted = np.asarray(planted, dtype=float).reshape(-1, d)
        n_planted = len(planted)
        if planted_labels is None:
            plab = rng.choice(np.array([-1, 1], dtype=np.int8), size=n_planted)
        else:
            plab = np.asarray(planted_labels, dtype=np.int8).reshape(n_planted)
        locs = np.vstack([planted, locs])
        labels = np.concatenate([plab, labels])
    order = _center_order(locs)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return MarkedPointSet(locs[order], labels[order], rank[:n_planted])


def sample_points(params: ModelParams, seed: int, planted=None, planted_labels=None) -> MarkedPointSet:
    return sample_marked(params.lam, params.d, params.n, seed, planted, planted_labels)


def candidate_pairs(locations: np.ndarray, radius: float, metric: Metric):
    """Pairs i < j within ``radius`` plus their metric distances."""
    if len(locations) < 2 or radius <= 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    if metric.periodic:
        side = metric.side
        tree = cKDTree(np.mod(locations + side / 2, side) % side, boxsize=side)
    else:
        tree = cKDTree(locations)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    pairs = np.sort(pairs.astype(np.int64), axis=1)
    i, j = pairs[:, 0], pairs[:, 1]
    dist = metric.norm_between(locations[i], locations[j])
    return i, j, dist


def sample_coupled(params: ModelParams, seed: int, planted=None, planted_labels=None,
                   with_info: bool = True) -> SpatialGraph:
    """Sample G (and the information graph I) from shared edge uniforms.

    G has an edge when U < f_in (same labels) or U < f_out (different labels);
    I has an edge when f_out <= U < f_in.
    """
    pts = sample_points(params, seed, planted, planted_labels)
    metric = params.metric
    i, j, dist = candidate_pairs(pts.locations, params.support, metric)
    u = edge_uniforms(_edge_seed(seed, 0), i, j) if len(i) else np.zeros(0)
    fin = params.f_in(dist)
    fout = params.f_out(dist)
    same = pts.labels[i] == pts.labels[j]
    g_edge = u < np.where(same, fin, fout)
    graph = SpatialGraph(pts, *_csr(pts.count, i[g_edge], j[g_edge]), metric, params.n)
    if with_info:
        i_edge = (u >= fout) & (u < fin)
        graph.info_indptr, graph.info_indices = _csr(pts.count, i[i_edge], j[i_edge])
    return graph


def sample_null(points: MarkedPointSet, g: ConnectionFunction, metric: Metric, seed: int,
                n: float | None = None) -> SpatialGraph:
    """Random connection model with profile ``g`` on fixed points; labels are ignored."""
    if n is None:
        span = np.ptp(points.locations, axis=0).max() if points.count else 1.0
        n = (metric.side if metric.periodic else span) ** points.d
    i, j, dist = candidate_pairs(points.locations, g.support, metric)
    u = edge_uniforms(_edge_seed(seed, 1), i, j) if len(i) else np.zeros(0)
    keep = u < g(dist)
    return SpatialGraph(points, *_csr(points.count, i[keep], j[keep]), metric, n)


def thin(graph: SpatialGraph, p: float, seed: int, keep=()) -> SpatialGraph:
    """Keep each node independently with probability ``p``; return the induced subgraph.

    Thinnings with the same seed and decreasing ``p`` are nested. Nodes listed
    in ``keep`` always survive.
    """
    if not 0 <= p <= 1:
        raise ValueError("retention probability must lie in [0, 1]")
    rng = _node_rng(seed, 2)
    mask = rng.random(graph.n_nodes) < p
    mask[np.asarray(keep, dtype=np.int64)] = True
    new_id = np.cumsum(mask) - 1
    pts = graph.points
    planted = new_id[pts.planted[mask[pts.planted]]] if len(pts.planted) else pts.planted
    sub_pts = MarkedPointSet(pts.locations[mask], pts.labels[mask], planted)

    def induced(indptr, indices):
        a, b = _upper_pairs(indptr, indices)
        ok = mask[a] & mask[b]
        return _csr(int(mask.sum()), new_id[a[ok]], new_id[b[ok]])

    out = SpatialGraph(sub_pts, *induced(graph.indptr, graph.indices), graph.metric, graph.n)
    if graph.has_info:
        out.info_indptr, out.info_indices = induced(graph.info_indptr, graph.info_indices)
    return out


HEADER = "geograph v1"


def write_graph(graph: SpatialGraph, fh) -> None:
    """Write the whitespace-delimited ``geograph v1`` text format."""
    fh.write(f"{HEADER} d={graph.d} n={graph.n!r} metric={graph.metric.kind}\n")
    for k, (x, z) in enumerate(zip(graph.points.locations, graph.points.labels)):
        coords = " ".join(repr(float(c)) for c in x)
        fh.write(f"N {k} {coords} {int(z)}\n")
    for a, b in zip(*graph.edges()):
        fh.write(f"E {a} {b}\n")
    if graph.has_info:
        for a, b in zip(*graph.info_edges()):
            fh.write(f"I {a} {b}\n")


def read_graph(fh) -> SpatialGraph:
    header = fh.readline().split()
    if header[:2] != HEADER.split():
        raise ValueError("not a geograph v1 file")
    meta = dict(tok.split("=", 1) for tok in header[2:])
    try:
        d = int(meta["d"])
        n = float(meta["n"])
        kind = meta["metric"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad geograph header: {exc}") from None
    metric = Metric(kind, n ** (1 / d)) if kind == TOROIDAL else Metric(kind)
    locs, labels, edges, info = [], [], [], []
    saw_info = False
    for lineno, line in enumerate(fh, start=2):
        tok = line.split()
        if not tok:
            continue
        try:
            if tok[0] == "N":
                if int(tok[1]) != len(locs):
                    raise ValueError("node ids must be consecutive from 0")
                locs.append([float(t) for t in tok[2:2 + d]])
                labels.append(int(tok[2 + d]))
            elif tok[0] == "E":
                edges.append((int(tok[1]), int(tok[2])))
            elif tok[0] == "I":
                saw_info = True
                info.append((int(tok[1]), int(tok[2])))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    pts = MarkedPointSet(np.asarray(locs, dtype=float).reshape(-1, d), np.asarray(labels))
    return SpatialGraph.from_edges(pts, edges, metric, n, info if saw_info else None)

"""Metrics, the cubic cell grid, and ball-intersection volumes."""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
TOROIDAL = "toroidal"


@dataclass(frozen=True)
class Metric:
    """Euclidean metric, or the flat torus of edge length ``side``."""

    kind: str = EUCLIDEAN
    side: float | None = None

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, TOROIDAL):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == TOROIDAL and not (self.side and self.side > 0):
            raise ValueError("toroidal metric needs a positive side")

    @property
    def periodic(self) -> bool:
        return self.kind == TOROIDAL

    def delta(self, x, y) -> np.ndarray:
        """Coordinate-wise absolute displacement, wrapped on the torus."""
        diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.periodic:
            diff = np.minimum(diff, self.side - diff)
        return diff

    def norm_between(self, x, y) -> np.ndarray:
        """Vectorised distance along the last axis."""
        return np.sqrt(np.sum(self.delta(x, y) ** 2, axis=-1))


def distance(metric: Metric, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(metric.norm_between(x, y))


def ball_volume(d: int, r: float = 1.0) -> float:
    """Volume nu_d r^d of the d-dimensional ball."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r ** d


@dataclass(frozen=True)
class GridSpec:
    """Cubic tessellation of side R / (4 d^(1/d))."""

    R: float
    d: int

    def __post_init__(self):
        if self.R <= 0 or self.d < 1:
            raise ValueError("grid needs R > 0 and d >= 1")

    @property
    def cell_side(self) -> float:
        return self.R / (4 * self.d ** (1 / self.d))

    def center(self, cell) -> np.ndarray:
        return np.asarray(cell, dtype=float) * self.cell_side


def cells_of(grid: GridSpec, points) -> np.ndarray:
    """Cell coordinates for an (N, d) array of points.

    Rounding each coordinate to the nearest multiple of the cell side,
    with exact halves sent down, gives the sup-norm nearest center and
    resolves every tie to the lexicographically smallest candidate.
    """
    pts = np.asarray(points, dtype=float)
    return np.ceil(pts / grid.cell_side - 0.5).astype(np.int64)


def cell_of(grid: GridSpec, x) -> tuple:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != grid.d:
        raise ValueError("point dimension does not match the grid")
    return tuple(int(c) for c in cells_of(grid, x)[0])


def neighbour_offsets(d: int, k: int = 1) -> np.ndarray:
    return np.array(list(itertools.product(range(-k, k + 1), repeat=d)), dtype=np.int64)


def thickening(cells, k: int) -> set:
    if k < 0:
        raise ValueError("k must be non-negative")
    out = set()
    for cell in cells:
        cell = tuple(cell)
        for off in itertools.product(range(-k, k + 1), repeat=len(cell)):
            out.add(tuple(c + o for c, o in zip(cell, off)))
    return out


def _mc_seed(*values) -> int:
    return zlib.crc32(repr(tuple(float(v) for v in values)).encode())


def _intersection_mc(d, r1, r2, dist, samples=100_000):
    # uniform samples in the bounding box of the smaller ball
    small, big = (r1, r2) if r1 <= r2 else (r2, r1)
    rng = np.random.default_rng(_mc_seed(d, r1, r2, dist))
    pts = rng.uniform(-small, small, size=(samples, d))
    other = np.zeros(d)
    other[0] = dist
    inside = (np.sum(pts ** 2, axis=1) <= small ** 2) & (
        np.sum((pts - other) ** 2, axis=1) <= big ** 2
    )
    return (2 * small) ** d * inside.mean()


def ball_intersection_volume(d: int, r1, r2, dist):
    """Volume of B(x, r1) ∩ B(y, r2) with |x - y| = dist.

    Closed forms for d <= 3 (vectorised over ``dist``), Monte Carlo above.
    """
    dist = np.asarray(dist, dtype=float)
    r1 = float(r1)
    r2 = float(r2)
    if r1 <= 0 or r2 <= 0:
        return np.zeros_like(dist)[()]
    small, big = min(r1, r2), max(r1, r2)
    if d > 3:
        flat = np.atleast_1d(dist)
        vals = np.empty_like(flat)
        for k, s in enumerate(flat):
            if s >= r1 + r2:
                vals[k] = 0.0
            elif s <= big - small:
                vals[k] = ball_volume(d, small)
            else:
                vals[k] = _intersection_mc(d, r1, r2, s)
        return vals.reshape(dist.shape)[()]

    contained = dist <= big - small
    disjoint = dist >= r1 + r2
    s = np.clip(dist, 1e-300, None)
    if d == 1:
        out = np.clip((r1 + r2 - dist) / 1.0, 0.0, None)
        out = np.minimum(out, 2 * small)
    elif d == 2:
        with np.errstate(invalid="ignore"):
            c1 = np.clip((s ** 2 + r1 ** 2 - r2 ** 2) / (2 * s * r1), -1.0, 1.0)
            c2 = np.clip((s ** 2 + r2 ** 2 - r1 ** 2) / (2 * s * r2), -1.0, 1.0)
            area = (
                r1 ** 2 * np.arccos(c1)
                + r2 ** 2 * np.arccos(c2)
                - 0.5
                * np.sqrt(
                    np.clip(
                        (-s + r1 + r2) * (s + r1 - r2) * (s - r1 + r2) * (s + r1 + r2),
                        0.0,
                        None,
                    )
                )
            )
        out = np.where(contained, math.pi * small ** 2, area)
    else:
        with np.errstate(invalid="ignore"):
            vol = (
                math.pi
                * (r1 + r2 - s) ** 2
                * (s ** 2 + 2 * s * (r1 + r2) - 3 * (r1 - r2) ** 2)
                / (12 * s)
            )
        out = np.where(contained, 4 / 3 * math.pi * small ** 3, vol)
    out = np.where(disjoint, 0.0, out)
    return np.asarray(out, dtype=float)[()]


def lens_volume(d: int, R: float, dist):
    """Volume of the intersection of two radius-R balls at distance ``dist``."""
    if d in (1, 2, 3):
        dist = np.asarray(dist, dtype=float)
        if d == 1:
            out = np.clip(2 * R - dist, 0.0, None)
        elif d == 2:
            t = np.clip(dist, 0.0, 2 * R)
            out = 2 * R ** 2 * np.arccos(t / (2 * R)) - t / 2 * np.sqrt(4 * R ** 2 - t ** 2)
        else:
            t = np.clip(dist, 0.0, 2 * R)
            out = math.pi * (4 * R + t) * (2 * R - t) ** 2 / 12
        return np.asarray(out, dtype=float)[()]
    return ball_intersection_volume(d, R, R, dist)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prcm.geom import (EUCLIDEAN, TOROIDAL, GridSpec, Metric, ball_intersection_volume,
                       ball_volume, cell_of, distance, lens_volume, thickening)


def mc_intersection(d, r1, r2, dist, samples=400_000, seed=11):
    # independent oracle: uniform samples in the box around both balls
    rng = np.random.default_rng(seed)
    lo = np.full(d, -max(r1, r2))
    hi = np.full(d, max(r1, r2))
    hi[0] = max(r1, dist + r2)
    pts = rng.uniform(lo, hi, size=(samples, d))
    c2 = np.zeros(d)
    c2[0] = dist
    inside = (np.linalg.norm(pts, axis=1) <= r1) & (np.linalg.norm(pts - c2, axis=1) <= r2)
    p = inside.mean()
    box = np.prod(hi - lo)
    return box * p, box * math.sqrt(p * (1 - p) / samples)


def test_distance_examples():
    assert distance(Metric(), (0, 0), (3, 4)) == pytest.approx(5)
    torus = Metric(TOROIDAL, 10.0)
    assert distance(torus, (4.5, 0), (-4.5, 0)) == pytest.approx(1)
    assert distance(torus, (4.5, 4.5), (-4.5, -4.5)) == pytest.approx(math.sqrt(2))


def test_distance_dimension_mismatch():
    with pytest.raises(ValueError):
        distance(Metric(), (0, 0), (0, 0, 0))


def test_metric_validation():
    with pytest.raises(ValueError):
        Metric(TOROIDAL)
    with pytest.raises(ValueError):
        Metric("manhattan")


coord = st.floats(-5, 5, allow_nan=False)
point = st.tuples(coord, coord)


@settings(max_examples=200)
@given(point, point, point, st.sampled_from([EUCLIDEAN, TOROIDAL]))
def test_metric_axioms(x, y, z, kind):
    m = Metric(kind, 10.0) if kind == TOROIDAL else Metric(kind)
    dxy, dyz, dxz = distance(m, x, y), distance(m, y, z), distance(m, x, z)
    assert dxy == pytest.approx(distance(m, y, x))
    assert dxz <= dxy + dyz + 1e-9
    assert distance(m, x, x) == 0
    if kind == TOROIDAL:
        assert np.all(m.delta(x, y) <= 5.0 + 1e-12)


def test_grid_cell_side():
    grid = GridSpec(1.0, 2)
    assert grid.cell_side * 4 * 2 ** 0.5 == pytest.approx(1.0)


def test_cell_of_examples():
    grid = GridSpec(1.0, 2)
    s = grid.cell_side
    assert cell_of(grid, (0, 0)) == (0, 0)
    assert cell_of(grid, (3 * s, 0)) == (3, 0)
    assert cell_of(grid, (0.5 * s, 0)) == (0, 0)
    assert cell_of(grid, (0.5 * s, 0.5 * s)) == (0, 0)
    assert cell_of(grid, (-0.5 * s, 0)) == (-1, 0)
    assert cell_of(grid, (0.51 * s, -0.49 * s)) == (1, 0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_cell_round_trip(d):
    grid = GridSpec(1.3, d)
    rng = np.random.default_rng(d)
    for z in rng.integers(-50, 50, size=(200, d)):
        assert cell_of(grid, grid.center(z)) == tuple(z)


def test_cell_of_is_sup_norm_nearest():
    grid = GridSpec(1.0, 2)
    rng = np.random.default_rng(5)
    for x in rng.uniform(-3, 3, size=(200, 2)):
        z = np.array(cell_of(grid, x))
        best = np.max(np.abs(x - grid.center(z)))
        for off in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
            assert best <= np.max(np.abs(x - grid.center(z + off))) + 1e-12


def test_thickening():
    z = (0, 0)
    assert thickening({z}, 0) == {z}
    assert len(thickening({z}, 1)) == 9
    assert len(thickening({(0, 0, 0)}, 1)) == 27
    assert len(thickening({z}, 2)) == 25
    cells = {(0, 0), (5, 5)}
    assert cells <= thickening(cells, 1)
    with pytest.raises(ValueError):
        thickening({z}, -1)


def test_lens_examples():
    assert lens_volume(2, 1, 0) == pytest.approx(math.pi)
    assert lens_volume(2, 1, 2) == 0
    assert lens_volume(2, 1, 3) == 0
    assert lens_volume(2, 1, 1) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2, abs=1e-12)
    assert lens_volume(2, 1, 1) == pytest.approx(1.22837, abs=1e-5)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_lens_properties(d):
    R = 1.5
    assert lens_volume(d, R, 0) == pytest.approx(ball_volume(d, R), rel=0.02 if d > 3 else 1e-12)
    assert lens_volume(d, R, 2 * R) == pytest.approx(0, abs=1e-12)
    dists = np.linspace(0, 2 * R, 9)
    vals = [float(lens_volume(d, R, s)) for s in dists]
    if d <= 3:
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("d,dist", [(1, 0.7), (2, 0.4), (2, 1.5), (3, 0.9), (4, 0.8)])
def test_lens_against_monte_carlo(d, dist):
    est, se = mc_intersection(d, 1.0, 1.0, dist)
    assert abs(float(lens_volume(d, 1.0, dist)) - est) < 4 * se + 0.02 * est * (d > 3)


@pytest.mark.parametrize("d,r1,r2,dist", [(2, 1.0, 0.5, 0.8), (2, 0.3, 1.0, 0.2), (3, 1.0, 0.6, 1.1),
                                          (1, 1.0, 0.4, 0.9)])
def test_unequal_intersection_against_monte_carlo(d, r1, r2, dist):
    est, se = mc_intersection(d, r1, r2, dist)
    assert abs(float(ball_intersection_volume(d, r1, r2, dist)) - est) < 4 * se
    assert float(ball_intersection_volume(d, r1, r2, dist)) == pytest.approx(
        float(ball_intersection_volume(d, r2, r1, dist)))


def test_intersection_limits():
    assert ball_intersection_volume(2, 1.0, 0.5, 0.2) == pytest.approx(math.pi * 0.25)
    assert ball_intersection_volume(3, 1.0, 0.5, 2.0) == 0
    assert ball_intersection_volume(2, 1.0, 1.0, 1.0) == pytest.approx(lens_volume(2, 1.0, 1.0))

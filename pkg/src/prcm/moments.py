"""Analytic quantities: lens moments, common-neighbour means, triangle moments,
CH-divergence and the weak/exact recovery threshold calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import ball_intersection_volume, ball_volume
from .model import ConnectionFunction, ModelParams, difference_integral


@dataclass(frozen=True)
class MomentPair:
    m_in: object
    m_out: object


@dataclass(frozen=True)
class ThresholdReport:
    lambda_lower: float
    lambda_upper: float
    peierls_lhs_at_upper: float
    chernoff_c: float

    def as_dict(self) -> dict:
        return {
            "lambda_lower": self.lambda_lower,
            "lambda_upper": self.lambda_upper,
            "peierls_lhs_at_upper": self.peierls_lhs_at_upper,
            "chernoff_c": self.chernoff_c,
        }


def _steps(f: ConnectionFunction, R: float):
    """Write f restricted to r < R as a sum of c_k * 1{r <= r_k}."""
    t = f.truncate(R)
    levels = np.asarray(t.levels)
    return np.asarray(t.radii), levels - np.append(levels[1:], 0.0)


def _cross(f, g, d, R, dist):
    rf, cf = _steps(f, R)
    rg, cg = _steps(g, R)
    total = np.zeros_like(dist)
    for r1, c1 in zip(rf, cf):
        if c1 == 0:
            continue
        for r2, c2 in zip(rg, cg):
            if c2 != 0:
                total = total + c1 * c2 * ball_intersection_volume(d, r1, r2, dist)
    return total


def eval_m(f_in: ConnectionFunction, f_out: ConnectionFunction, d: int, R: float, dist) -> MomentPair:
    """M_in and M_out over the lens S_R at centre distance ``dist``.

    Both profiles are piecewise constant, so each product integral is an exact
    combination of two-ball intersection volumes.
    """
    dist = np.asarray(dist, dtype=float)
    m_in = _cross(f_in, f_in, d, R, dist) + _cross(f_out, f_out, d, R, dist)
    m_out = 2 * _cross(f_in, f_out, d, R, dist)
    far = dist >= 2 * R
    m_in = np.where(far, 0.0, m_in)[()]
    m_out = np.where(far, 0.0, m_out)[()]
    return MomentPair(m_in, m_out)


def common_neighbor_means(params: ModelParams, dist, R: float | None = None):
    """Palm means (lambda/2) M_in and (lambda/2) M_out of the common-neighbour count."""
    R = params.support if R is None else R
    m = eval_m(params.f_in, params.f_out, params.d, R, dist)
    return params.lam / 2 * m.m_in, params.lam / 2 * m.m_out


def lambda_lower(f_in: ConnectionFunction, f_out: ConnectionFunction, d: int) -> float:
    integral = difference_integral(f_in, f_out, d)
    return math.inf if integral <= 0 else 1.0 / integral


def ch_divergence(mu, nu, tol: float = 1e-12) -> float:
    """D+(mu, nu) = max over t in [0, 1] of sum(t mu + (1-t) nu - mu^t nu^(1-t))."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("mu and nu must have equal length")
    if np.any(mu < 0) or np.any(nu < 0):
        raise ValueError("entries must be non-negative")

    def objective(t):
        return float(np.sum(t * mu + (1 - t) * nu - mu ** t * nu ** (1 - t)))

    inv = (math.sqrt(5) - 1) / 2
    lo, hi = 0.0, 1.0
    c, e = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fe = objective(c), objective(e)
    while hi - lo > tol:
        if fc >= fe:
            hi, e, fe = e, c, fc
            c = hi - inv * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, e, fe
            e = lo + inv * (hi - lo)
            fe = objective(e)
    best = max(objective(0.5 * (lo + hi)), objective(0.0), objective(1.0))
    return max(best, 0.0)


def exact_recovery_threshold(lam: float, a: float, b: float, d: int) -> float:
    """lambda nu_d (1 - sqrt(ab) - sqrt((1-a)(1-b))); exact recovery fails below 1."""
    return lam * ball_volume(d) * (1 - math.sqrt(a * b) - math.sqrt((1 - a) * (1 - b)))


def peierls_lhs(q: float, M: int, eta: float | None = None) -> float:
    """(1/3) sum_{n >= M} n x^n with x = 3 q^(1/M), in closed form.

    ``eta`` does not enter the sum; it is accepted so callers can pass the
    full bound configuration.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    x = 3 * q ** (1 / M)
    if x >= 1:
        return math.inf
    return x ** M * (M - (M - 1) * x) / (1 - x) ** 2 / 3


def _h(t):
    return (1 + t) * np.log1p(t) - t


def chernoff_constant(f_in, f_out, d, R=None, points: int = 64) -> float:
    """Infimum over pair distances in [0, 3R/4] of the misclassification exponent.

    Uses the Palm means (lambda/2) M, so the exponent per unit lambda is
    (1/2) M_out h((M_in - M_out) / (2 M_in)) (M_in when M_out vanishes).
    """
    R = f_in.support if R is None else R
    dist = np.linspace(0.0, 0.75 * R, points)
    m = eval_m(f_in, f_out, d, R, dist)
    m_in, m_out = np.asarray(m.m_in), np.asarray(m.m_out)
    base = np.where(m_out > 0, m_out, m_in)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(m_in > 0, (m_in - m_out) / (2 * m_in), 0.0)
    return float(np.min(0.5 * base * _h(t)))


def t_good_failure_bound(lam, R, d, epsilon, c):
    """q(lambda): probability bound that a cell fails to be T-Good."""
    cell_vol = (R / (4 * d ** (1 / d))) ** d
    return math.exp(-lam * cell_vol * _h(epsilon)) + lam ** 2 * (0.75 * R) ** d / d * math.exp(-c * lam)


def lambda_upper_bound(f_in, f_out, d, epsilon=0.1, eta=0.05, cap=1e7, start=1e-2,
                       R=None, with_details: bool = False):
    """Smallest lambda on a 1.01-geometric grid where the Peierls sum is <= 1/2 - eta."""
    if not 0 < epsilon < 0.5 or not 0 < eta < 0.5:
        raise ValueError("epsilon and eta must lie in (0, 1/2)")
    R = f_in.support if R is None else R
    c = chernoff_constant(f_in, f_out, d, R)
    M = math.ceil(12 * d ** (1 / d))
    target = 0.5 - eta
    lam, lhs = math.inf, math.inf
    if c > 0:
        k = 0
        while True:
            cand = start * 1.01 ** k
            if cand > cap:
                break
            val = peierls_lhs(t_good_failure_bound(cand, R, d, epsilon, c), M, eta)
            if val <= target:
                lam, lhs = cand, val
                break
            k += 1
    if with_details:
        return lam, lhs, c
    return lam


def threshold_report(f_in, f_out, d, epsilon=0.1, eta=0.05) -> ThresholdReport:
    upper, lhs, c = lambda_upper_bound(f_in, f_out, d, epsilon, eta, with_details=True)
    return ThresholdReport(lambda_lower(f_in, f_out, d), upper, lhs, c)


@dataclass(frozen=True)
class TriangleWeight:
    """Test function h(x, y) = 1{|x| <= R} 1{|y| <= R} [1{f_in > f_out on all three legs}]."""

    radius: float
    informative_only: bool = True


def _uniform_ball(rng, count, d, radius):
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random(count)[:, None] ** (1 / d)


def triangle_weight(h: TriangleWeight, f_in, f_out, rx, ry, rxy):
    w = (rx <= h.radius) & (ry <= h.radius)
    if h.informative_only:
        for r in (rx, ry, rxy):
            w &= f_in(r) > f_out(r)
    return w


def triangle_deltas(f_in, f_out, lam, d, h_spec: TriangleWeight | None = None,
                    samples: int = 2_000_000, seed: int = 0x7A1A, batch: int = 250_000):
    """Monte Carlo values of the triangle moments Delta_G and Delta_H.

    Both integrals use the same samples, so delta_G - delta_H is estimated by a
    pointwise non-negative integrand.
    """
    if h_spec is None:
        h_spec = TriangleWeight(f_in.support)
    rng = np.random.default_rng([seed, d])
    vol = ball_volume(d, h_spec.radius) ** 2
    acc_g = acc_h = 0.0
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        x = _uniform_ball(rng, m, d, h_spec.radius)
        y = _uniform_ball(rng, m, d, h_spec.radius)
        rx, ry = np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)
        rxy = np.linalg.norm(x - y, axis=1)
        w = triangle_weight(h_spec, f_in, f_out, rx, ry, rxy)
        ix, iy, ixy = f_in(rx), f_in(ry), f_in(rxy)
        ox, oy, oxy = f_out(rx), f_out(ry), f_out(rxy)
        g = ixy * (ix * iy + ox * oy) + oxy * (ix * oy + ox * iy)
        acc_g += float(np.sum(w * g)) / 4
        acc_h += float(np.sum(w * (ix + ox) * (iy + oy) * (ixy + oxy))) / 8
        done += m
    scale = lam ** 2 * vol / samples
    return acc_g * scale, acc_h * scale

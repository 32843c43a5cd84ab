"""Norm aggregators, difference norms, Poincare checkers, medians.

Conventions: L^p is always measure-weighted, sums run as written for
p, q < 1 (quasi-norms, no triangle inequality is assumed anywhere), and
infinite exponents collapse to plain maxima on finite spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import MetricMeasureSpace, ball_average
from .fields import ScalarField
from .gradients import GradientSequence

INF = math.inf


@dataclass(frozen=True)
class NormParams:
    """(s, p, q) plus the family tag selecting which norm is meant."""

    s: float
    p: float
    q: float
    family: str = "M"  # M | N | F | B | BP | Sobolev

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ValueError(f"s={self.s} outside (0, 1]")
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive (possibly inf)")
        if self.family not in ("M", "N", "F", "B", "BP", "Sobolev"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "BP" and not (1 <= self.p < INF):
            raise ValueError("Bourdon-Pajot norm needs p in [1, inf)")


def _lq_over_scales(g: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return np.max(g, axis=0)
    return np.sum(g ** q, axis=0) ** (1.0 / q)


def _lp_over_points(v: np.ndarray, mu: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(v)) if len(v) else 0.0
    return float(np.sum(mu * v ** p) ** (1.0 / p))


def aggregate(space, grad: GradientSequence, p: float, q: float,
              mode: str = "Lp_lq") -> float:
    """Mixed-norm size of a gradient sequence.

    ``Lp_lq``: pointwise l^q across scales, then weighted L^p over points.
    ``lq_Lp``: weighted L^p per scale, then l^q across scales.
    """
    g = grad.g
    mu = space.measure
    if mode == "Lp_lq":
        return _lp_over_points(_lq_over_scales(g, q), mu, p)
    if mode == "lq_Lp":
        per_scale = np.array([_lp_over_points(g[i], mu, p) for i in range(len(g))])
        if math.isinf(q):
            return float(np.max(per_scale)) if len(per_scale) else 0.0
        return float(np.sum(per_scale ** q) ** (1.0 / q))
    raise ValueError(f"unknown aggregation mode {mode!r}")


def norm_infinity_q(space, grad: GradientSequence, q: float) -> float:
    """sup over (k, x) of the tail-sum ball average
    { sum_{j >= k} avg_{B(x, 2^-k)} g_j^q }^(1/q); plain double sup for q = inf."""
    if math.isinf(q):
        return float(np.max(grad.g)) if grad.g.size else 0.0
    win = grad.window
    best = 0.0
    for k in win:
        radius = 2.0 ** (-k)
        tail = np.sum(grad.g[k - win.k_min:] ** q, axis=0)
        for x in range(space.n_points):
            best = max(best, ball_average(space, tail, x, radius))
    return best ** (1.0 / q)


def bourdon_pajot_norm(space, field: ScalarField, s: float, p: float) -> float:
    """Double-sum difference norm with kernel |du|^p / (d^(sp) mu(B(x, d)))."""
    if not 1 <= p < INF:
        raise ValueError("Bourdon-Pajot norm needs p in [1, inf)")
    D = space.dist_matrix
    V = space.pair_ball_mass()
    du = np.abs(field.values[:, None] - field.values[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(D > 0,
                          du ** p / (D ** (s * p) * np.where(V > 0, V, 1.0)),
                          0.0)
    mu = space.measure
    total = float(mu @ kernel @ mu)
    return total ** (1.0 / p)


# -- medians and rearrangements ---------------------------------------------

def median(space, field: ScalarField, ball) -> float:
    """Smallest weighted median of the field over an open ball.

    ``ball`` is (center, radius).  The result m satisfies both
    mu({u > m}) <= mu(B)/2 and mu({u < m}) <= mu(B)/2 inside the ball.
    """
    center, radius = ball
    mask = space.ball_mask(center, radius)
    values = field.values[mask]
    weights = space.measure[mask]
    if len(values) == 0:
        raise ValueError("empty ball")
    return weighted_median(values, weights)


def weighted_median(values, weights) -> float:
    order = np.argsort(values, kind="stable")
    v = np.asarray(values, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    total = float(np.sum(w))
    below = np.concatenate([[0.0], np.cumsum(w)[:-1]])  # mass strictly below v_i (with ties, see below)
    # collapse ties so below/above are per unique value
    uniq, first = np.unique(v, return_index=True)
    csum = np.cumsum(w)
    for idx, val in zip(first, uniq):
        mass_below = below[idx]
        mass_at_or_below = csum[np.searchsorted(v, val, side="right") - 1]
        mass_above = total - mass_at_or_below
        if mass_below <= total / 2 + 1e-15 * total and \
           mass_above <= total / 2 + 1e-15 * total:
            return float(val)
    raise AssertionError("no weighted median found")


def rearrangement(space, field_abs, t: float) -> float:
    """Nonincreasing rearrangement v*(t) = inf{a > 0 : mu(|v| > a) <= t}."""
    if t < 0:
        raise ValueError("t must be >= 0")
    v = np.abs(np.asarray(field_abs.values if isinstance(field_abs, ScalarField)
                          else field_abs, dtype=float))
    return rearrangement_values(v, space.measure, t)


def rearrangement_values(abs_values, weights, t: float) -> float:
    order = np.argsort(-abs_values, kind="stable")
    v = abs_values[order]
    w = np.asarray(weights, dtype=float)[order]
    # group ties, descending unique values
    uniq, inv = np.unique(-v, return_inverse=True)
    masses = np.bincount(inv, weights=w)
    cum = np.cumsum(masses)
    vals = -uniq
    above = np.flatnonzero(cum > t + 1e-15 * max(1.0, t))
    if len(above) == 0:
        return 0.0
    return float(vals[above[0]])


@dataclass(frozen=True)
class MedianReport:
    median_value: float
    ball: tuple
    delta: float
    c: float
    median_gap: float        # |m_u(B) - c|
    rearrangement_value: float
    bound_rhs: float         # (2 avg_B |u - c|^delta)^(1/delta)
    chain_holds: bool


def check_median_bound(space, field: ScalarField, ball, c: float,
                       delta: float, tol: float = 1e-12) -> MedianReport:
    """Verify |m_u(B) - c| <= (|u - c| 1_B)*(|B|/2) <= (2 avg_B |u-c|^delta)^(1/delta).

    Both inequalities are theorems, so a violation (beyond roundoff)
    indicates an implementation bug; the report carries all three values.
    """
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    center, radius = ball
    mask = space.ball_mask(center, radius)
    values = field.values[mask]
    weights = space.measure[mask]
    m = weighted_median(values, weights)
    gap = abs(m - c)
    dev = np.abs(values - c)
    ball_mass = float(np.sum(weights))
    rearr = rearrangement_values(dev, weights, ball_mass / 2.0)
    mean_delta = float(np.sum(weights * dev ** delta) / ball_mass)
    rhs = (2.0 * mean_delta) ** (1.0 / delta)
    scale = max(1.0, gap, rearr, rhs)
    holds = gap <= rearr + tol * scale and rearr <= rhs + tol * scale
    return MedianReport(median_value=m, ball=ball, delta=delta, c=c,
                        median_gap=gap, rearrangement_value=rearr,
                        bound_rhs=rhs, chain_holds=holds)


# -- Poincare-type checkers --------------------------------------------------

@dataclass(frozen=True)
class PoincareBall:
    center: int
    k: int
    lhs: float
    rhs: float
    ratio: float


@dataclass(frozen=True)
class PoincareReport:
    variant: str
    balls: list

    @property
    def max_ratio(self) -> float:
        finite = [b.ratio for b in self.balls if math.isfinite(b.ratio)]
        return max(finite) if finite else 0.0

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(b.ratio) for b in self.balls)


def _golden_min(fun, lo, hi, tol=1e-10):
    """Golden-section minimizer of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol * max(1.0, abs(a), abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return min(fc, fd)


def check_poincare(space, field: ScalarField, grad: GradientSequence, s: float,
                   variant="L1_annulus", subcritical_params=None,
                   centers=None, scales=None, ambient_dim=None) -> PoincareReport:
    """Per-ball local oscillation against scale-weighted gradient averages.

    variant "L1_annulus": lhs = inf_c avg_{B(x, 2^-k)} |u - c| (exact, the
    minimizer is a weighted median); rhs = 2^(-ks) * sum_{j=k-3..k}
    avg_{B(x, 2^-k+2)} g_j.  variant "subcritical" takes (p, eps, eps')
    with eps < eps' < s and p <= 1: lhs = inf_c (avg |u - c|^p*)^(1/p*)
    with p* = n p / (n - eps p); rhs = 2^(-k eps') sum_{j >= k-2}
    2^(-j (s - eps')) (avg_{B(x, 2^-k+1)} g_j^p)^(1/p).  No constant is
    applied to rhs; reports carry raw per-ball ratios.
    """
    u = field.values
    mu = space.measure
    win = grad.window
    if centers is None:
        centers = range(space.n_points) if space.n_points <= 192 else \
            range(0, space.n_points, space.n_points // 128)
    if scales is None:
        scales = list(win)
    balls = []
    for k in scales:
        r_small = 2.0 ** (-k)
        for x in centers:
            if variant == "L1_annulus":
                mask = space.ball_mask(x, r_small)
                vals, w = u[mask], mu[mask]
                m = weighted_median(vals, w)
                lhs = float(np.sum(w * np.abs(vals - m)) / np.sum(w))
                rhs = 0.0
                for j in range(k - 3, k + 1):
                    gj = grad.value_at(j)
                    rhs += ball_average(space, gj, x, 4.0 * r_small)
                rhs *= r_small ** s
            elif variant == "subcritical":
                p, eps, eps_p = subcritical_params
                if not (eps < eps_p < s):
                    raise ValueError("need eps < eps' < s")
                n_amb = ambient_dim or (space.grid_info[0]
                                        if space.grid_info else 1)
                p_star = n_amb * p / (n_amb - eps * p)
                mask = space.ball_mask(x, r_small)
                vals, w = u[mask], mu[mask]
                wn = w / np.sum(w)

                def lhs_at(c):
                    return float(np.sum(wn * np.abs(vals - c) ** p_star)) ** (1.0 / p_star)

                lhs = _golden_min(lhs_at, float(np.min(vals)), float(np.max(vals))) \
                    if len(vals) > 1 else 0.0
                rhs = 0.0
                for j in range(k - 2, win.k_max + 1):
                    gj = grad.value_at(j)
                    avg = ball_average(space, gj ** p, x, 2.0 * r_small)
                    rhs += 2.0 ** (-j * (s - eps_p)) * avg ** (1.0 / p)
                rhs *= 2.0 ** (-k * eps_p)
            else:
                raise ValueError(f"unknown Poincare variant {variant!r}")
            if lhs <= 0:
                ratio = 0.0
            elif rhs > 0:
                ratio = lhs / rhs
            else:
                ratio = math.inf
            balls.append(PoincareBall(center=int(x), k=int(k), lhs=lhs,
                                      rhs=rhs, ratio=ratio))
    return PoincareReport(variant=variant, balls=balls)

"""Per-scale gradient sequences and the pointwise-inequality gradient classes.

A gradient sequence {g_k} controls a field u when, for every pair x != y at
dyadic scale k (i.e. 2^(-k-1) <= d(x,y) < 2^(-k)),

    |u(x) - u(y)| <= d(x,y)^s [g_k(x) + g_k(y)].

Membership in this base class and in its three variants (scale-shifted,
lower-tail, upper-tail) is checked quantitatively: ``check_membership``
returns the smallest multiplier rho such that rho * g is a member, which is
finite, continuous in g, and 1-homogeneous.  The explicit transforms between
the classes are implemented so that the output is a *true* member whenever
the input is (no slack constants are dropped); see the docstrings on
``transform_from_base`` / ``transform_to_base`` for the exact formulas.

Two constructive gradients are provided: ``difference_gradient`` (annulus
double averages of difference quotients) and ``grand_maximal_gradient``
(scaled sup of smooth mean-zero convolutions over a finite atom dictionary).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .space import MetricMeasureSpace, ScaleWindow, scale_of_distance
from .fields import ScalarField
from .atoms import AtomDictionary


@dataclass(frozen=True)
class GradientSequence:
    """Nonnegative field per dyadic scale; zero outside the stored window."""

    space: MetricMeasureSpace
    window: ScaleWindow
    g: np.ndarray  # shape (len(window), n_points)

    def __post_init__(self):
        arr = np.asarray(self.g, dtype=float)
        if arr.shape != (len(self.window), self.space.n_points):
            raise ValueError(f"gradient array shape {arr.shape} does not match "
                             f"window {self.window} x {self.space.n_points} points")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("gradient entries must be finite and >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "g", arr)

    def value_at(self, k: int) -> np.ndarray:
        if self.window.k_min <= k <= self.window.k_max:
            return self.g[k - self.window.k_min]
        return np.zeros(self.space.n_points)

    def scaled(self, a: float) -> "GradientSequence":
        if a < 0:
            raise ValueError("gradient scaling factor must be >= 0")
        return GradientSequence(self.space, self.window, a * self.g)

    def max_over_scales(self) -> np.ndarray:
        return np.max(self.g, axis=0)


def zero_gradient(space, window=None) -> GradientSequence:
    window = window or space.scale_window()
    return GradientSequence(space, window,
                            np.zeros((len(window), space.n_points)))


def constant_gradient(space, value, window=None) -> GradientSequence:
    window = window or space.scale_window()
    return GradientSequence(space, window,
                            np.full((len(window), space.n_points), float(value)))


@dataclass(frozen=True)
class GradientClassSpec:
    """Which pointwise inequality a sequence must satisfy.

    kind = "base":        one constraint per pair, at the pair's own scale.
    kind = "shifted":      constraints at every k with
                           2^(-k-1-N1) <= d < 2^(-k+N2)  (N1, N2 >= 0).
    kind = "lower_tail":   |u(x)-u(y)| <= d^(s-eps) * sum_{k >= k0-N}
                           2^(-k eps) [g_k(x)+g_k(y)], eps in (0, s].
    kind = "upper_tail":   |u(x)-u(y)| <= d^(s+eps) * sum_{k <= k0-N}
                           2^(k eps) [g_k(x)+g_k(y)], eps > 0.

    Here k0 is the pair scale.  N may be any integer for the tail classes.
    """

    kind: str
    s: float
    N1: int = 0
    N2: int = 0
    epsilon: float = 0.0
    N: int = 0

    def __post_init__(self):
        if not 0 < self.s <= 2:
            raise ValueError(f"smoothness s={self.s} outside (0, 2]")
        if self.kind == "base":
            pass
        elif self.kind == "shifted":
            if self.N1 < 0 or self.N2 < 0:
                raise ValueError("shifted class needs N1, N2 >= 0")
        elif self.kind == "lower_tail":
            if not 0 < self.epsilon <= self.s:
                raise ValueError("lower_tail needs epsilon in (0, s]")
        elif self.kind == "upper_tail":
            if not self.epsilon > 0:
                raise ValueError("upper_tail needs epsilon > 0")
        else:
            raise ValueError(f"unknown gradient class kind {self.kind!r}")


def base_class(s) -> GradientClassSpec:
    return GradientClassSpec("base", s)


def shifted_class(s, N1, N2) -> GradientClassSpec:
    return GradientClassSpec("shifted", s, N1=N1, N2=N2)


def lower_tail_class(s, epsilon, N) -> GradientClassSpec:
    return GradientClassSpec("lower_tail", s, epsilon=epsilon, N=N)


def upper_tail_class(s, epsilon, N) -> GradientClassSpec:
    return GradientClassSpec("upper_tail", s, epsilon=epsilon, N=N)


@dataclass(frozen=True)
class FeasibilityReport:
    """Quantitative membership: rho_min * g is a member, rho_min <= 1 means g is."""

    rho_min: float
    worst_pair: tuple | None
    violated_count: int
    n_constraints: int

    @property
    def is_member(self) -> bool:
        return self.rho_min <= 1.0 + 1e-12


def _pair_arrays(space, field):
    """Upper-triangle pair data: indices, distances, |du|, pair scales."""
    n = space.n_points
    iu, ju = np.triu_indices(n, k=1)
    d = np.empty(len(iu))
    pos = 0
    for i in range(n):
        row = space.dist_row(i)
        cnt = n - i - 1
        d[pos:pos + cnt] = row[i + 1:]
        pos += cnt
    du = np.abs(field.values[iu] - field.values[ju])
    _, exps = np.frexp(d)  # d = m 2^e, m in [0.5, 1)  =>  scale = -e
    k0 = -exps.astype(int)
    return iu, ju, d, du, k0


def _ratio_array(req, avail):
    out = np.zeros_like(req)
    pos = req > 0
    ok = pos & (avail > 0)
    out[ok] = req[ok] / avail[ok]
    out[pos & ~ok] = math.inf
    return out


class _RatioTracker:
    def __init__(self):
        self.rho = 0.0
        self.worst = None
        self.violated = 0
        self.count = 0

    def update(self, req, avail, iu, ju, kk):
        ratios = _ratio_array(req, avail)
        self.count += len(ratios)
        self.violated += int(np.sum(ratios > 1.0 + 1e-12))
        if len(ratios):
            q = int(np.argmax(ratios))
            if ratios[q] > self.rho:
                self.rho = float(ratios[q])
                k = int(kk) if np.isscalar(kk) else int(kk[q])
                self.worst = (int(iu[q]), int(ju[q]), k)

    def report(self):
        return FeasibilityReport(self.rho, self.worst, self.violated, self.count)


def check_membership(space, field, grad: GradientSequence,
                     class_spec: GradientClassSpec) -> FeasibilityReport:
    """Smallest rho making rho * grad a member of the class, plus diagnostics."""
    if space.n_points < 2:
        return FeasibilityReport(0.0, None, 0, 0)
    iu, ju, d, du, k0 = _pair_arrays(space, field)
    s = class_spec.s
    win = grad.window
    tracker = _RatioTracker()

    if class_spec.kind in ("base", "shifted"):
        n1 = class_spec.N1 if class_spec.kind == "shifted" else 0
        n2 = class_spec.N2 if class_spec.kind == "shifted" else 0
        ds = d ** s
        # a pair at scale k0 is constrained at every k in [k0 - N1, k0 + N2];
        # gather scale rows through a padded table indexed by k0 + offset
        k_lo, k_hi = int(k0.min()) - n1, int(k0.max()) + n2
        table = np.array([grad.value_at(k) for k in range(k_lo, k_hi + 1)])
        for off in range(-n1, n2 + 1):
            rows = k0 + off - k_lo
            avail = ds * (table[rows, iu] + table[rows, ju])
            tracker.update(du, avail, iu, ju, k0 + off)
        return tracker.report()

    eps = class_spec.epsilon
    ks = np.arange(win.k_min, win.k_max + 1)
    if class_spec.kind == "lower_tail":
        weighted = (2.0 ** (-ks * eps))[:, None] * grad.g
        # suffix[m] = sum over stored k >= k_min + m of 2^(-k eps) g_k
        suffix = np.vstack([np.cumsum(weighted[::-1], axis=0)[::-1],
                            np.zeros((1, space.n_points))])
        m = np.clip(k0 - class_spec.N - win.k_min, 0, len(ks))
        avail = d ** (s - eps) * (suffix[m, iu] + suffix[m, ju])
        tracker.update(du, avail, iu, ju, k0)
        return tracker.report()

    if class_spec.kind == "upper_tail":
        weighted = (2.0 ** (ks * eps))[:, None] * grad.g
        # prefix[m] = sum over stored k <= k_min + m - 1 of 2^(k eps) g_k
        prefix = np.vstack([np.zeros((1, space.n_points)),
                            np.cumsum(weighted, axis=0)])
        m = np.clip(k0 - class_spec.N - win.k_min + 1, 0, len(ks))
        avail = d ** (s + eps) * (prefix[m, iu] + prefix[m, ju])
        tracker.update(du, avail, iu, ju, k0)
        return tracker.report()

    raise AssertionError(class_spec.kind)


def _realized_union(space, k_lo, k_hi) -> ScaleWindow:
    return space.scale_window().union(ScaleWindow(k_lo, k_hi))


def transform_from_base(grad: GradientSequence,
                        class_spec: GradientClassSpec) -> GradientSequence:
    """Map a base member to a member of the variant class.

    shifted:     h_k = sum_{j=-N2}^{N1} g_{k+j}
    lower_tail:  h_k = 2^(m eps) g_{k-m},      m = |N|
    upper_tail:  h_k = 2^((m+1) eps) g_{k+m},  m = max(N, 0)

    For lower_tail with N >= 0 this is the textbook shift h_k =
    2^(N eps) g_{k-N}; negative N needs the mirrored shift m = -N so the
    pair-scale term stays inside the constrained tail.  For upper_tail the
    indicator d < 2^(-k-N) never reaches the pair scale itself, so the mass
    is shifted to index k0 - m and premultiplied by 2^((m+1) eps), the exact
    factor lost when bounding d^eps 2^((k0-m) eps) from below.  With these
    constants the output passes membership with rho_min <= 1 exactly.
    """
    space, win = grad.space, grad.window
    if class_spec.kind == "base":
        return grad
    if class_spec.kind == "shifted":
        n1, n2 = class_spec.N1, class_spec.N2
        out_win = _realized_union(space, win.k_min - n1, win.k_max + n2)
        rows = [sum((grad.value_at(k + j) for j in range(-n2, n1 + 1)),
                    np.zeros(space.n_points)) for k in out_win]
        return GradientSequence(space, out_win, np.array(rows))
    eps = class_spec.epsilon
    if class_spec.kind == "lower_tail":
        m = abs(class_spec.N)
        out_win = _realized_union(space, win.k_min + m, win.k_max + m)
        rows = [2.0 ** (m * eps) * grad.value_at(k - m) for k in out_win]
        return GradientSequence(space, out_win, np.array(rows))
    if class_spec.kind == "upper_tail":
        m = max(class_spec.N, 0)
        out_win = _realized_union(space, win.k_min - m, win.k_max - m)
        rows = [2.0 ** ((m + 1) * eps) * grad.value_at(k + m) for k in out_win]
        return GradientSequence(space, out_win, np.array(rows))
    raise AssertionError(class_spec.kind)


def transform_to_base(grad: GradientSequence,
                      class_spec: GradientClassSpec) -> GradientSequence:
    """Map a variant-class member to a base member.

    shifted:     identity (the base constraint is among the shifted ones)
    lower_tail:  h_k = sum_{j >= k-N} 2^((k-j+1) eps) g_j
    upper_tail:  h_k = sum_{j <= k-N} 2^((j-k) eps) g_j

    Sums run over the stored window; entries outside it are zero.
    """
    space, win = grad.space, grad.window
    if class_spec.kind in ("base", "shifted"):
        return grad
    eps = class_spec.epsilon
    ks = np.arange(win.k_min, win.k_max + 1)
    if class_spec.kind == "lower_tail":
        out_win = _realized_union(space, min(win.k_min, win.k_min + class_spec.N),
                                  max(win.k_max, win.k_max + class_spec.N))
        weighted = 2.0 ** (-ks * eps)[:, None] * grad.g
        suffix = np.vstack([np.cumsum(weighted[::-1], axis=0)[::-1],
                            np.zeros((1, space.n_points))])
        rows = []
        for k in out_win:
            m = min(max(k - class_spec.N - win.k_min, 0), len(ks))
            rows.append(2.0 ** ((k + 1) * eps) * suffix[m])
        return GradientSequence(space, out_win, np.array(rows))
    if class_spec.kind == "upper_tail":
        out_win = _realized_union(space, min(win.k_min, win.k_min + class_spec.N),
                                  max(win.k_max, win.k_max + class_spec.N))
        weighted = 2.0 ** (ks * eps)[:, None] * grad.g
        prefix = np.vstack([np.zeros((1, space.n_points)),
                            np.cumsum(weighted, axis=0)])
        rows = []
        for k in out_win:
            m = min(max(k - class_spec.N - win.k_min + 1, 0), len(ks))
            rows.append(2.0 ** (-k * eps) * prefix[m])
        return GradientSequence(space, out_win, np.array(rows))
    raise AssertionError(class_spec.kind)


def roundtrip_constant(class_spec: GradientClassSpec) -> float:
    """Norm-inflation bound of from_base followed by to_base.

    Computed from the geometric series of the to_base weights; the round
    trip keeps membership (rho <= 1), while its entrywise size grows by at
    most this factor.
    """
    if class_spec.kind in ("base", "shifted"):
        return float(class_spec.N1 + class_spec.N2 + 1)
    eps = class_spec.epsilon
    ratio = 2.0 ** (-eps)
    geo = 1.0 / (1.0 - ratio)
    if class_spec.kind == "lower_tail":
        m = abs(class_spec.N)
        return 2.0 ** ((m + class_spec.N + 1) * eps) * geo
    m = max(class_spec.N, 0)
    return 2.0 ** ((m + 1 - class_spec.N) * eps) * geo


def warn_infinity_restriction(class_spec: GradientClassSpec, p: float) -> None:
    """Warn when a variant class is combined with p = infinity.

    The sup-type aggregation is only guaranteed equivalent for shifted
    classes with N1 = 0 and lower tails with N <= 0 unless the space's
    doubling property is certified; we diagnose doubling but never certify.
    """
    if not math.isinf(p):
        return
    bad = (class_spec.kind == "shifted" and class_spec.N1 > 0) or \
          (class_spec.kind == "lower_tail" and class_spec.N > 0)
    if bad:
        warnings.warn("p = inf with this gradient class is only known "
                      "equivalent on certified doubling spaces "
                      f"(kind={class_spec.kind}, N1/N={class_spec.N1 or class_spec.N})",
                      stacklevel=2)


# -- constructive gradients -------------------------------------------------

def _difference_window(space, K0) -> ScaleWindow:
    win = space.scale_window()
    return ScaleWindow(win.k_min, win.k_max + K0 + 1)


def difference_gradient(space, field: ScalarField, s: float, p: float,
                        K0: int = 2) -> GradientSequence:
    """Annulus double-average difference quotients, one field per scale.

    h_j(x)^p averages, over y in B(x, 2^(-j-1)), the integral over z in the
    annulus B(x, 2^(-j+K0+1)) \\ B(x, 2^(-j+1)) of

        |u(y) - u(z)|^p / (d(y,z)^(sp) mu(B(y, d(y,z)))).

    Empty annuli contribute zero.  Scaled by its own lower-tail rho_min
    (eps = s, N = 1) the output is a class member on any connected space.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if K0 < 1:
        raise ValueError("K0 must be >= 1")
    win = _difference_window(space, K0)
    if space.topology == "periodic_grid" and space.n_points >= 256:
        return _difference_gradient_grid(space, field, s, p, K0, win)
    return _difference_gradient_dense(space, field, s, p, K0, win)


def _difference_kernel(space, field, s, p):
    """K[y, z] = mu(z) |u(y)-u(z)|^p / (d(y,z)^(sp) V(y,z)), zero diagonal."""
    D = space.dist_matrix
    V = space.pair_ball_mass()
    du = np.abs(field.values[:, None] - field.values[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(D > 0, du ** p / (D ** (s * p) * np.where(V > 0, V, 1.0)), 0.0)
    return K * space.measure[None, :]


def _difference_gradient_dense(space, field, s, p, K0, win):
    K = _difference_kernel(space, field, s, p)
    D = space.dist_matrix
    mu = space.measure
    rows = []
    for j in win:
        r_in, r_out = 2.0 ** (-j + 1), 2.0 ** (-j + K0 + 1)
        Y = D < 2.0 ** (-j - 1)
        A = (D >= r_in) & (D < r_out)
        inner = K @ A.T  # inner[y, x] = sum_z in annulus(x) of K[y, z]
        Yw = Y * mu[None, :]
        num = np.einsum("xy,yx->x", Yw, inner)
        den = Yw.sum(axis=1)
        rows.append((num / den) ** (1.0 / p))
    return GradientSequence(space, win, np.array(rows))


def _difference_gradient_grid(space, field, s, p, K0, win):
    """FFT path: annulus sums are circular convolutions on the torus."""
    n_dim, res, side = space.grid_info
    shape = tuple([res] * n_dim)
    n = space.n_points
    mu0 = float(space.measure[0])

    d0 = space.dist_row(0)
    order = np.argsort(d0, kind="stable")
    csum = np.cumsum(space.measure[order])
    below = np.searchsorted(d0[order], d0[order], side="left")
    row0 = np.empty(n)
    row0[order] = np.where(below > 0, csum[np.maximum(below - 1, 0)], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_off = np.where(d0 > 0,
                         1.0 / (d0 ** (s * p) * np.where(row0 > 0, row0, 1.0)),
                         0.0)

    u = field.values
    # M[y, z] = mu(z) w(z - y) |u(y) - u(z)|^p, stored as offset-indexed rows
    idx = np.arange(n).reshape(shape)
    axes = tuple(range(1, n_dim + 1))
    du_p = np.abs(u[:, None] - u[None, :]) ** p
    offs = np.empty((n, n), dtype=np.intp)
    for i in range(n):
        shifts = np.unravel_index(i, shape)
        # offs[y][z] = linear index of the wrapped offset z - y
        offs[i] = np.roll(idx, shift=shifts,
                          axis=tuple(range(n_dim))).ravel()
    M = mu0 * du_p * w_off[offs]
    FM = np.fft.fftn(M.reshape((n,) + shape), axes=axes)

    rows = []
    arange_n = np.arange(n)
    for j in win:
        r_in, r_out = 2.0 ** (-j + 1), 2.0 ** (-j + K0 + 1)
        A = ((d0 >= r_in) & (d0 < r_out)).astype(float).reshape(shape)
        if not A.any():
            rows.append(np.zeros(n))
            continue
        FA = np.fft.fftn(A)
        G = np.fft.ifftn(FM * FA[None], axes=axes).real.reshape(n, n)
        ball_offsets = np.flatnonzero(d0 < 2.0 ** (-j - 1))
        num = np.zeros(n)
        for o in ball_offsets:
            shifts = np.unravel_index(o, shape)
            rolled = np.roll(idx, shift=shifts, axis=tuple(range(n_dim))).ravel()
            num += G[rolled, arange_n]
        den = float(len(ball_offsets))  # uniform measure cancels mu0
        rows.append(np.maximum(num / den, 0.0) ** (1.0 / p))
    return GradientSequence(space, win, np.array(rows))


def grand_maximal_gradient(space, field: ScalarField, s: float,
                           dictionary: AtomDictionary) -> GradientSequence:
    """g_k(x) = 2^(ks) sup over dictionary atoms of |(phi_t * u)(x)|, t = 2^-k.

    Convolutions are evaluated spectrally on the torus (multiplication by
    the atom's analytic Fourier transform at the grid frequencies), so
    mean-zero atoms kill constants exactly.  The finite dictionary
    under-approximates the full test class, hence downstream norms are
    one-sided (lower) bounds of the grand norms.
    """
    if space.topology != "periodic_grid":
        raise ValueError("grand maximal gradient needs a periodic grid")
    if len(dictionary.atoms) == 0:
        raise ValueError("dictionary must be nonempty")
    n_dim, res, side = space.grid_info
    if dictionary.n_dim != n_dim:
        raise ValueError("dictionary dimension does not match the grid")
    shape = tuple([res] * n_dim)
    h = side / res
    freqs = np.meshgrid(*[np.fft.fftfreq(res, d=h)] * n_dim, indexing="ij")
    xi = np.stack(freqs, axis=-1)  # cycles per unit length
    U = np.fft.fftn(field.values.reshape(shape))
    win = space.scale_window()
    rows = []
    for k in win:
        t = 2.0 ** (-k)
        best = np.zeros(shape)
        for atom in dictionary.atoms:
            mult = atom.fourier(t * xi)
            conv = np.fft.ifftn(U * mult).real
            best = np.maximum(best, np.abs(conv))
        rows.append((2.0 ** (k * s)) * best.ravel())
    return GradientSequence(space, win, np.array(rows))


def gradient_to_dict(grad: GradientSequence) -> dict:
    return {"window": [grad.window.k_min, grad.window.k_max],
            "g": {str(k): grad.value_at(k).tolist() for k in grad.window}}


def gradient_from_dict(space, data: dict) -> GradientSequence:
    k_min, k_max = data["window"]
    win = ScaleWindow(int(k_min), int(k_max))
    rows = [np.asarray(data["g"][str(k)], dtype=float) for k in win]
    return GradientSequence(space, win, np.array(rows))

"""Discrete quasiconformal map analysis and composition invariance runs.

Maps between grids are stored as explicit point bijections, built by
rounding an analytic map of the centered fundamental domain to the nearest
target grid point and resolving collisions greedily (deterministic source
order, nearest available target cell).  Composition u -> u o f is then
exact, while distortion statistics tolerate the O(h) rounding; experiments
mask a boundary ring and the origin cell where the analytic map is not
torus-compatible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import MetricMeasureSpace, ScaleWindow, build_periodic_grid
from .fields import ScalarField, ConfigError, FunctionFamilySpec, generate_family
from .norms import NormParams
from .backends import compute_norm, BackendOptions


@dataclass(frozen=True)
class MapSample:
    source: MetricMeasureSpace
    target: MetricMeasureSpace
    assignment: np.ndarray    # source index -> target index, a bijection
    family_tag: str = "custom"

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.intp)
        if len(a) != self.source.n_points or len(a) != self.target.n_points:
            raise ValueError("assignment must pair equal point counts")
        if len(np.unique(a)) != len(a):
            raise ValueError("assignment is not a bijection")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def inverse(self) -> "MapSample":
        inv = np.empty_like(self.assignment)
        inv[self.assignment] = np.arange(len(self.assignment))
        return MapSample(self.target, self.source, inv,
                         family_tag=self.family_tag + "^-1")


def _centered(coords, side):
    return np.where(coords >= side / 2.0, coords - side, coords)


def _assign_nearest(source, target, images) -> np.ndarray:
    """Nearest-grid rounding with greedy collision resolution.

    ``images`` are analytic image points in the target's centered domain.
    Collisions are resolved in source index order by the nearest available
    target point (torus metric), so the construction is deterministic.
    """
    n_dim, res, side = target.grid_info
    h = side / res
    wrapped = np.mod(images, side)
    cells = np.mod(np.rint(wrapped / h).astype(np.intp), res)
    flat = np.ravel_multi_index(tuple(cells.T), tuple([res] * n_dim))
    assignment = np.full(source.n_points, -1, dtype=np.intp)
    taken = np.zeros(target.n_points, dtype=bool)
    collided = []
    for i, t in enumerate(flat):
        if not taken[t]:
            assignment[i] = t
            taken[t] = True
        else:
            collided.append(i)
    tcoords = target.coords
    for i in collided:
        want = wrapped[i]
        delta = np.abs(tcoords - want)
        delta = np.minimum(delta, side - delta)
        d2 = np.sum(delta * delta, axis=1)
        d2[taken] = np.inf
        t = int(np.argmin(d2))
        assignment[i] = t
        taken[t] = True
    return assignment


def identity_map(grid) -> MapSample:
    return MapSample(grid, grid, np.arange(grid.n_points), family_tag="identity")


def linear_map(source, target, matrix) -> MapSample:
    """x -> A x on the centered fundamental domain, rounded to the target grid."""
    A = np.asarray(matrix, dtype=float)
    x = _centered(source.coords, source.grid_info[2])
    images = x @ A.T
    assignment = _assign_nearest(source, target, images)
    return MapSample(source, target, assignment, family_tag="linear")


def radial_power_map(source, target, a: float) -> MapSample:
    """x -> |x|^(a-1) x on the centered fundamental domain (r -> r^a)."""
    if a <= 0:
        raise ValueError("radial exponent must be positive")
    x = _centered(source.coords, source.grid_info[2])
    r = np.sqrt(np.sum(x * x, axis=1))
    factor = np.where(r > 0, r ** (a - 1.0), 0.0)
    images = factor[:, None] * x
    assignment = _assign_nearest(source, target, images)
    return MapSample(source, target, assignment, family_tag=f"radial:{a}")


def radial_target_side(source, a: float, pad: float = 1.1) -> float:
    """Side length comfortably containing the radial image of the source domain."""
    side = source.grid_info[2]
    n_dim = source.grid_info[0]
    corner = side * math.sqrt(n_dim) / 2.0
    return max(side, 2.0 * pad * corner ** a)


def build_map(source, kind: str, target=None, **kwargs) -> MapSample:
    """Convenience constructor; builds a compatible target grid when absent."""
    n_dim, res, side = source.grid_info
    if kind == "identity":
        return identity_map(source)
    if kind == "radial_power":
        a = kwargs["a"]
        if target is None:
            target = build_periodic_grid(n_dim, res, radial_target_side(source, a))
        return radial_power_map(source, target, a)
    if kind == "linear":
        A = np.asarray(kwargs["matrix"], dtype=float)
        if target is None:
            scale = float(np.max(np.sum(np.abs(A), axis=1)))
            target = build_periodic_grid(n_dim, res, side * max(1.0, scale))
        return linear_map(source, target, A)
    if kind == "dilation":
        lam = kwargs.get("factor", 2.0)
        A = np.eye(n_dim) * lam
        if target is None:
            target = build_periodic_grid(n_dim, res, side * lam)
        return linear_map(source, target, A)
    raise ConfigError(f"unknown map kind {kind!r}")


def interior_mask(grid, ring: int = 2, mask_origin: bool = True) -> np.ndarray:
    """Mask off a boundary ring of the centered domain (and the origin cell)."""
    n_dim, res, side = grid.grid_info
    h = side / res
    x = _centered(grid.coords, side)
    ok = np.all(np.abs(x) < side / 2.0 - ring * h, axis=1)
    if mask_origin:
        r = np.sqrt(np.sum(x * x, axis=1))
        ok &= r > 1.5 * h
    return ok


# -- distortion ----------------------------------------------------------------

@dataclass(frozen=True)
class MapAnalysis:
    scales: list                 # dyadic k per analyzed radius 2^-k
    L_table: np.ndarray          # (n_points, n_scales), NaN where skipped
    ell_table: np.ndarray
    H_per_point: np.ndarray      # max over usable scales of L/ell
    H_hat: float                 # masked global sup
    eta_samples: list            # (t, ratio) pairs
    skipped: int
    multiplicity_histogram: dict # dyadic bin -> max count of scales landing in it


def analyze_distortion(map_sample: MapSample, scale_window=None, mask=None,
                       eta_sample_count: int = 400, rng_seed: int = 0) -> MapAnalysis:
    src, tgt = map_sample.source, map_sample.target
    if src.n_points < 2:
        raise ValueError("distortion needs at least 2 points")
    if scale_window is None:
        win = src.scale_window()
        scale_window = ScaleWindow(win.k_min + 1, max(win.k_min + 1, win.k_max - 2))
    scales = list(scale_window)
    radii = [2.0 ** (-k) for k in scales]
    n = src.n_points
    L = np.full((n, len(scales)), np.nan)
    ell = np.full((n, len(scales)), np.nan)
    skipped = 0
    assign = map_sample.assignment
    for x in range(n):
        dx = src.dist_row(x)
        dy = tgt.dist_row(assign[x])[assign]
        order = np.argsort(dx, kind="stable")
        dxs, dys = dx[order], dy[order]
        prefix_max = np.maximum.accumulate(dys)
        suffix_min = np.minimum.accumulate(dys[::-1])[::-1]
        for col, r in enumerate(radii):
            hi = np.searchsorted(dxs, r, side="right") - 1  # d <= r
            lo = np.searchsorted(dxs, r, side="left")       # d >= r
            if hi < 0 or lo >= n:
                skipped += 1
                continue
            L[x, col] = prefix_max[hi]
            ell[x, col] = suffix_min[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = L / ell
    H_pp = np.nanmax(ratios, axis=1)
    use = mask if mask is not None else np.ones(n, dtype=bool)
    finite = use & np.isfinite(H_pp)
    H_hat = float(np.max(H_pp[finite])) if np.any(finite) else math.inf

    rng = np.random.default_rng(rng_seed)
    eta = []
    for _ in range(eta_sample_count):
        x, a, b = rng.integers(0, n, size=3)
        if x == b or x == a:
            continue
        t = src.dist(x, a) / src.dist(x, b)
        num = tgt.dist(assign[x], assign[a])
        den = tgt.dist(assign[x], assign[b])
        if den > 0:
            eta.append((float(t), float(num / den)))

    hist: dict = {}
    valid_L = L[np.isfinite(L) & (L > 0)] if L.size else np.array([])
    if valid_L.size:
        for x in range(n):
            row = L[x][np.isfinite(L[x]) & (L[x] > 0)]
            if not len(row):
                continue
            _, exps = np.frexp(row)
            bins, counts = np.unique(-exps.astype(int), return_counts=True)
            for b, cnt in zip(bins, counts):
                hist[int(b)] = max(hist.get(int(b), 0), int(cnt))
    return MapAnalysis(scales=scales, L_table=L, ell_table=ell,
                       H_per_point=H_pp, H_hat=H_hat, eta_samples=eta,
                       skipped=skipped, multiplicity_histogram=hist)


# -- volume derivative and reverse Holder --------------------------------------

@dataclass(frozen=True)
class VolumeDerivativeField:
    J_hat: np.ndarray
    radius: float
    mass_error: float           # |sum mu_X J - mu_Y(Y)| / mu_Y(Y)


def volume_derivative(map_sample: MapSample, radius=None) -> VolumeDerivativeField:
    """Finite-radius quotient mu_Y(f(B(x, r))) / mu_X(B(x, r)).

    Default radius is three source grid spacings (the finest scale we treat
    as reliable for limits r -> 0).
    """
    src, tgt = map_sample.source, map_sample.target
    if radius is None:
        if src.grid_info is not None:
            radius = 3.0 * src.grid_info[2] / src.grid_info[1]
        else:
            radius = 3.0 * src.min_distance
    assign = map_sample.assignment
    J = np.empty(src.n_points)
    for x in range(src.n_points):
        mask = src.ball_mask(x, radius)
        J[x] = np.sum(tgt.measure[assign[mask]]) / np.sum(src.measure[mask])
    total = float(np.dot(src.measure, J))
    mass_err = abs(total - tgt.total_measure) / tgt.total_measure
    return VolumeDerivativeField(J_hat=J, radius=float(radius), mass_error=mass_err)


@dataclass(frozen=True)
class ReverseHolderReport:
    r_grid: tuple
    constants: tuple            # sup over sampled balls of (avg w^r)^(1/r) / avg w
    R_f_hat: float              # largest tested r with constant <= threshold
    threshold: float
    n_balls: int


def sample_balls(space, count: int, radius_range, rng_seed: int = 0, mask=None):
    rng = np.random.default_rng(rng_seed)
    idx = np.flatnonzero(mask) if mask is not None else np.arange(space.n_points)
    balls = []
    for _ in range(count):
        c = int(idx[rng.integers(0, len(idx))])
        r = float(rng.uniform(*radius_range))
        balls.append((c, r))
    return balls


def reverse_holder_scan(space, w, r_grid, balls, threshold: float = 100.0,
                        restrict=None) -> ReverseHolderReport:
    """Reverse Holder constants of a positive weight over sampled balls.

    For each exponent r the constant is the sup over balls of
    (avg_B w^r)^(1/r) / avg_B w; it is 1 at r = 1 and nondecreasing in r by
    the power mean inequality.  ``restrict`` optionally masks the points
    entering each ball average (e.g. interior cells only).
    """
    w = np.asarray(w.values if isinstance(w, ScalarField) else w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("reverse Holder scan needs a strictly positive weight")
    mu = space.measure
    keep = restrict if restrict is not None else np.ones(space.n_points, dtype=bool)
    constants = []
    for r in r_grid:
        worst = 0.0
        for center, radius in balls:
            mask = space.ball_mask(center, radius) & keep
            if not np.any(mask):
                continue
            wm, vals = mu[mask], w[mask]
            mean = float(np.dot(wm, vals) / np.sum(wm))
            if math.isinf(r):
                lhs = float(np.max(vals))
            else:
                lhs = float(np.dot(wm, vals ** r) / np.sum(wm)) ** (1.0 / r)
            worst = max(worst, lhs / mean)
        constants.append(worst)
    R_hat = 1.0
    for r, cst in zip(r_grid, constants):
        if cst <= threshold and math.isfinite(cst):
            R_hat = max(R_hat, float(r) if math.isfinite(r) else R_hat)
    return ReverseHolderReport(tuple(float(r) for r in r_grid), tuple(constants),
                               R_hat, threshold, len(balls))


# -- composition ----------------------------------------------------------------

def compose(field_on_target: ScalarField, map_sample: MapSample) -> ScalarField:
    """(u o f)(x) = u(f(x)); exact because the assignment is a bijection."""
    if field_on_target.space is not map_sample.target and \
            field_on_target.space.content_hash() != map_sample.target.content_hash():
        raise ConfigError("field must live on the map target")
    return ScalarField(map_sample.source,
                       field_on_target.values[map_sample.assignment],
                       label=field_on_target.label + "∘f")


@dataclass(frozen=True)
class ChangeOfVariablesReport:
    lhs: float                  # sum mu_X u(f(x)) J(x)
    rhs: float                  # sum mu_Y u(y)
    discrepancy: float          # relative, or absolute when rhs = 0
    relative: bool


def change_of_variables_check(field_on_target, map_sample, J_hat) -> ChangeOfVariablesReport:
    u = field_on_target.values
    if np.any(u < 0):
        raise ValueError("change of variables check needs a nonnegative field")
    J = J_hat.J_hat if isinstance(J_hat, VolumeDerivativeField) else np.asarray(J_hat)
    src, tgt = map_sample.source, map_sample.target
    lhs = float(np.sum(src.measure * u[map_sample.assignment] * J))
    rhs = float(np.sum(tgt.measure * u))
    if rhs > 0:
        return ChangeOfVariablesReport(lhs, rhs, abs(lhs - rhs) / rhs, True)
    return ChangeOfVariablesReport(lhs, rhs, abs(lhs - rhs), False)


# -- invariance experiments ------------------------------------------------------

@dataclass(frozen=True)
class RatioRow:
    field_label: str
    s: float
    p: float
    q: float
    norm_target: float
    norm_source: float
    ratio: float


@dataclass(frozen=True)
class RatioReport:
    map_tag: str
    backend: str
    rows: tuple

    def summary(self):
        """Per (s, p, q): min, max, geometric mean of composition ratios."""
        out = {}
        keys = sorted({(r.s, r.p, r.q) for r in self.rows})
        for key in keys:
            ratios = [r.ratio for r in self.rows
                      if (r.s, r.p, r.q) == key and math.isfinite(r.ratio) and r.ratio > 0]
            if not ratios:
                out[key] = (math.nan, math.nan, math.nan)
                continue
            logs = np.log(ratios)
            out[key] = (float(np.min(ratios)), float(np.max(ratios)),
                        float(np.exp(np.mean(logs))))
        return out


def invariance_experiment(map_sample: MapSample, family_spec: FunctionFamilySpec,
                          norm_params_list, norm_backend: str = "difference",
                          options: BackendOptions | None = None) -> RatioReport:
    """Composition-operator norm ratios ||u o f|| / ||u|| over a field family.

    The family is generated on the map target; each field is pulled back
    exactly through the bijection and both norms are computed by the chosen
    backend.  Deterministic for a fixed spec and map.
    """
    src, tgt = map_sample.source, map_sample.target
    if norm_backend == "lp" and (src.topology != "periodic_grid" or
                                 tgt.topology != "periodic_grid"):
        raise ConfigError("lp backend needs periodic grids on both sides")
    fields = generate_family(tgt, family_spec)
    rows = []
    for f in fields:
        pulled = compose(f, map_sample)
        for params in norm_params_list:
            n_t = compute_norm(tgt, f, params, norm_backend, options)
            n_s = compute_norm(src, pulled, params, norm_backend, options)
            ratio = n_s / n_t if n_t > 0 else math.inf
            rows.append(RatioRow(f.label, params.s, params.p, params.q,
                                 n_t, n_s, ratio))
    return RatioReport(map_tag=map_sample.family_tag, backend=norm_backend,
                       rows=tuple(rows))

"""Finite metric measure spaces: point clouds and periodic (flat-torus) grids.

A space bundles a point set, a symmetric distance, and a strictly positive
point measure.  Everything downstream (gradients, norms, optimization)
queries spaces only through the small API here, so the discrete geometry
conventions are fixed in one place:

* balls are open, ``B(x, r) = {y : d(x, y) < r}``;
* the dyadic scale of a pair is the unique integer ``k`` with
  ``2^(-k-1) <= d(x, y) < 2^(-k)``;
* the realized scale window of a space runs from the scale of its diameter
  to the scale of its minimum positive distance.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

# Full pairwise-distance matrices are cached below this size; larger grids
# compute rows on demand from coordinates.
DENSE_DISTANCE_LIMIT = 2 ** 12
DEFAULT_POINT_BUDGET = 2 ** 16

EXHAUSTIVE_TRIANGLE_LIMIT = 200
SAMPLED_TRIANGLE_COUNT = 10_000
TRIANGLE_SAMPLE_SEED = 20240601


class MetricValidationError(ValueError):
    """A claimed metric violates symmetry, positivity, or the triangle inequality."""


class ResourceError(RuntimeError):
    """A construction exceeds the configured point budget."""


@dataclass(frozen=True)
class ScaleWindow:
    """Closed integer range of dyadic scales ``k_min <= k <= k_max``."""

    k_min: int
    k_max: int

    def __post_init__(self):
        if self.k_min > self.k_max:
            raise ValueError(f"empty scale window [{self.k_min}, {self.k_max}]")

    def __iter__(self):
        return iter(range(self.k_min, self.k_max + 1))

    def __len__(self):
        return self.k_max - self.k_min + 1

    def union(self, other: "ScaleWindow") -> "ScaleWindow":
        return ScaleWindow(min(self.k_min, other.k_min), max(self.k_max, other.k_max))


def scale_of_distance(d: float) -> int:
    """The unique integer k with 2^(-k-1) <= d < 2^(-k).

    Uses ``math.frexp`` so powers of two land on the correct side of the
    boundary exactly.
    """
    if not d > 0:
        raise ValueError(f"scale undefined for distance {d}")
    _, exp = math.frexp(d)  # d = m * 2^exp with m in [0.5, 1)
    return -exp


@dataclass(frozen=True)
class DoublingReport:
    """Fitted two-sided ball-growth exponents mu(B(x, lr)) ~ l^e mu(B(x, r)).

    ``n_hat`` is the least-squares growth exponent over all samples,
    ``kappa_hat`` a conservative lower (reverse-doubling) exponent, and
    ``C1_hat <= 1 <= C2_hat`` the envelope constants realized by the samples.
    """

    C1_hat: float
    C2_hat: float
    kappa_hat: float
    n_hat: float
    samples: list = field(default_factory=list)


class MetricMeasureSpace:
    """Immutable finite metric measure space.

    Parameters
    ----------
    dist : (n, n) array or None
        Full distance matrix.  May be None for periodic grids, where
        distances are recomputed from coordinates on demand.
    measure : (n,) array of strictly positive point weights.
    coords : optional (n, dim) coordinates (grids always carry them).
    topology : "point_cloud" or "periodic_grid".
    grid_info : (n_dim, resolution, side_length) for grids.
    """

    def __init__(self, dist, measure, coords=None, topology="point_cloud",
                 grid_info=None, validate=True, grid_index=None):
        measure = np.asarray(measure, dtype=float)
        if measure.ndim != 1 or len(measure) == 0:
            raise MetricValidationError("measure must be a nonempty 1-d array")
        if not np.all(np.isfinite(measure)) or np.any(measure <= 0):
            raise MetricValidationError("all point measures must be finite and > 0")
        self.n_points = len(measure)
        self.measure = measure
        self.measure.setflags(write=False)
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        if self.coords is not None:
            self.coords.setflags(write=False)
        # integer lattice coordinates keep the torus metric exactly
        # translation invariant (float coords are not, off powers of two)
        self._grid_index = None if grid_index is None else \
            np.asarray(grid_index, dtype=np.int64)
        self.topology = topology
        self.grid_info = grid_info
        self._dist = None if dist is None else np.asarray(dist, dtype=float)
        if self._dist is not None:
            self._dist.setflags(write=False)
        if self._dist is None and topology != "periodic_grid":
            raise MetricValidationError("point clouds require an explicit distance matrix")
        if validate and self._dist is not None:
            self._validate_metric()
        self._window = None
        self._pair_ball_mass = None
        self._hash = None

    # -- construction-time checks ------------------------------------------

    def _validate_metric(self):
        d = self._dist
        n = self.n_points
        if d.shape != (n, n):
            raise MetricValidationError(f"distance matrix shape {d.shape} != ({n}, {n})")
        if not np.all(np.isfinite(d)):
            raise MetricValidationError("distances must be finite")
        if np.any(np.abs(np.diagonal(d)) > 0):
            raise MetricValidationError("distance diagonal must be zero")
        asym = np.max(np.abs(d - d.T)) if n > 1 else 0.0
        if asym > 1e-12 * max(1.0, float(np.max(d))):
            raise MetricValidationError(f"distance matrix asymmetric (max gap {asym:.3g})")
        if n > 1:
            off = d[~np.eye(n, dtype=bool)]
            if np.any(off <= 0):
                i, j = np.argwhere((d <= 0) & ~np.eye(n, dtype=bool))[0]
                raise MetricValidationError(
                    f"distinct points {i}, {j} at nonpositive distance {d[i, j]}")
        self._validate_triangles(d)

    def _validate_triangles(self, d):
        n = self.n_points
        if n < 3:
            return
        tol = 1e-12 * max(1.0, float(np.max(d)))
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT:
            # d(i,k) <= d(i,j) + d(j,k) for all triples, vectorized per j
            for j in range(n):
                slack = d - (d[:, j:j + 1] + d[j:j + 1, :])
                bad = np.argwhere(slack > tol)
                if len(bad):
                    i, k = bad[0]
                    raise MetricValidationError(
                        f"triangle inequality fails for ({i}, {j}, {k}): "
                        f"d({i},{k})={d[i, k]:.6g} > {d[i, j] + d[j, k]:.6g}")
        else:
            rng = np.random.default_rng(TRIANGLE_SAMPLE_SEED)
            triples = rng.integers(0, n, size=(SAMPLED_TRIANGLE_COUNT, 3))
            i, j, k = triples.T
            slack = d[i, k] - d[i, j] - d[j, k]
            bad = np.argwhere(slack > tol)
            if len(bad):
                b = bad[0][0]
                raise MetricValidationError(
                    f"triangle inequality fails for sampled triple "
                    f"({i[b]}, {j[b]}, {k[b]})")

    # -- distance access ----------------------------------------------------

    def _torus_row(self, i):
        n_dim, res, side = self.grid_info
        h = side / res
        delta = np.abs(self._grid_index - self._grid_index[i])
        delta = np.minimum(delta, res - delta)
        return h * np.sqrt(np.sum((delta * delta).astype(float), axis=1))

    def dist_row(self, i: int) -> np.ndarray:
        if self._dist is not None:
            return self._dist[i]
        return self._torus_row(i)

    def dist(self, i: int, j: int) -> float:
        return float(self.dist_row(i)[j])

    @property
    def dist_matrix(self) -> np.ndarray:
        """Full distance matrix (built lazily for on-demand grids)."""
        if self._dist is None:
            rows = np.stack([self._torus_row(i) for i in range(self.n_points)])
            rows.setflags(write=False)
            self._dist = rows
        return self._dist

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measure))

    @property
    def diameter(self) -> float:
        if self.n_points == 1:
            return 0.0
        return float(max(np.max(self.dist_row(i)) for i in range(self.n_points)))

    @property
    def min_distance(self) -> float:
        if self.n_points == 1:
            return 0.0
        best = math.inf
        for i in range(self.n_points):
            row = self.dist_row(i).copy()
            row[i] = math.inf
            best = min(best, float(np.min(row)))
        return best

    def scale_window(self) -> ScaleWindow:
        """Scales realized by actual pairs: [scale(diameter), scale(min dist)]."""
        if self.n_points < 2:
            raise ValueError("scale window undefined for a single point")
        if self._window is None:
            self._window = ScaleWindow(scale_of_distance(self.diameter),
                                       scale_of_distance(self.min_distance))
        return self._window

    def ball_mask(self, center: int, radius: float) -> np.ndarray:
        return self.dist_row(center) < radius

    def ball_mass(self, center: int, radius: float) -> float:
        return float(np.sum(self.measure[self.ball_mask(center, radius)]))

    def pair_ball_mass(self) -> np.ndarray:
        """Matrix V[x, y] = mu(B(x, d(x, y))) with the open-ball convention.

        On periodic grids V depends only on the offset y - x, so a single
        row is computed and tiled by index arithmetic.
        """
        if self._pair_ball_mass is not None:
            return self._pair_ball_mass
        n = self.n_points
        if self.topology == "periodic_grid":
            row = self.dist_row(0)
            order = np.argsort(row, kind="stable")
            sorted_d = row[order]
            csum = np.cumsum(self.measure[order])
            # mass strictly below each distance; ties share the lower bound
            below = np.searchsorted(sorted_d, sorted_d, side="left")
            mass_below = np.where(below > 0, csum[np.maximum(below - 1, 0)], 0.0)
            v_row = np.empty(n)
            v_row[order] = mass_below
            # grid points are enumerated row-major with periodic wrap per
            # axis, so V[i, j] is the origin row evaluated at offset j - i
            shape = tuple([self.grid_info[1]] * self.grid_info[0])
            idx = np.arange(n).reshape(shape)
            V = np.empty((n, n))
            for i in range(n):
                shifts = np.unravel_index(i, shape)
                rolled = np.roll(idx, shift=shifts,
                                 axis=tuple(range(len(shape))))
                V[i] = v_row[rolled.ravel()]
            self._pair_ball_mass = V
            return V
        d = self.dist_matrix
        V = np.empty((n, n))
        for i in range(n):
            row = d[i]
            order = np.argsort(row, kind="stable")
            csum = np.cumsum(self.measure[order])
            sorted_d = row[order]
            below = np.searchsorted(sorted_d, row, side="left")
            V[i] = np.where(below > 0, csum[np.maximum(below - 1, 0)], 0.0)
        self._pair_ball_mass = V
        return V

    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            h.update(self.topology.encode())
            h.update(repr(self.grid_info).encode())
            h.update(self.measure.tobytes())
            if self.coords is not None:
                h.update(self.coords.tobytes())
            elif self._dist is not None:
                h.update(self._dist.tobytes())
            self._hash = h.hexdigest()[:16]
        return self._hash


def build_point_cloud(dist, measure, validate=True) -> MetricMeasureSpace:
    """Validated space from an explicit distance matrix and weights."""
    return MetricMeasureSpace(dist, measure, topology="point_cloud", validate=validate)


def build_periodic_grid(n_dim: int, resolution: int, side_length: float,
                        point_budget: int = DEFAULT_POINT_BUDGET) -> MetricMeasureSpace:
    """Uniform flat-torus grid with resolution^n_dim points.

    Each point carries measure (side_length / resolution)^n_dim; the metric
    is the flat-torus distance, exact by construction (no triangle checks).
    """
    if n_dim not in (1, 2, 3):
        raise ValueError(f"n_dim must be 1, 2, or 3, got {n_dim}")
    if resolution < 4:
        raise ValueError(f"resolution must be >= 4, got {resolution}")
    if side_length <= 0:
        raise ValueError("side_length must be positive")
    n = resolution ** n_dim
    if n > point_budget:
        raise ResourceError(
            f"grid would have {n} points, over the budget of {point_budget}")
    h = side_length / resolution
    axes = [np.arange(resolution)] * n_dim
    mesh = np.meshgrid(*axes, indexing="ij")
    grid_index = np.stack([m.ravel() for m in mesh], axis=1)
    coords = grid_index * h
    measure = np.full(n, h ** n_dim)
    dist = None
    if n <= DENSE_DISTANCE_LIMIT:
        delta = np.abs(grid_index[:, None, :] - grid_index[None, :, :])
        delta = np.minimum(delta, resolution - delta)
        dist = h * np.sqrt(np.sum(delta * delta, axis=2).astype(float))
    return MetricMeasureSpace(dist, measure, coords=coords,
                              topology="periodic_grid",
                              grid_info=(n_dim, resolution, side_length),
                              validate=False, grid_index=grid_index)


def scale_of_pair(space: MetricMeasureSpace, x: int, y: int) -> int:
    """Dyadic scale k of the pair (x, y); raises for x == y."""
    if x == y:
        raise ValueError("scale_of_pair needs two distinct points")
    return scale_of_distance(space.dist(x, y))


def ball_average(space: MetricMeasureSpace, values, center: int, radius: float) -> float:
    """Measure-weighted average of a field over the open ball B(center, radius)."""
    values = np.asarray(values, dtype=float)
    mask = space.ball_mask(center, radius)
    w = space.measure[mask]
    return float(np.dot(w, values[mask]) / np.sum(w))


def estimate_doubling(space: MetricMeasureSpace, lambda_grid=(1.5, 2.0),
                      sample_count: int = 200, rng_seed: int = 0,
                      radius_range=None) -> DoublingReport:
    """Fit two-sided ball-growth exponents from sampled (x, r, lambda) triples.

    For each sample the ratio mu(B(x, lr)) / mu(B(x, r)) is recorded.  The
    growth exponent ``n_hat`` is the least-squares slope of log ratio against
    log lambda; ``kappa_hat`` is the smaller of that slope and the 10th
    percentile of per-sample exponents (clipped at 0), a conservative
    reverse-doubling estimate.  Envelope constants are then read off the
    samples, so ``C1_hat <= 1 <= C2_hat`` and ``kappa_hat <= n_hat`` hold by
    construction.  Deterministic for a fixed seed.
    """
    if space.n_points < 2:
        raise ValueError("doubling estimate needs at least 2 points")
    rng = np.random.default_rng(rng_seed)
    lam_max = max(lambda_grid)
    if radius_range is None:
        r_lo = 3.0 * space.min_distance
        r_hi = space.diameter / (2.0 * lam_max)
        if r_hi <= r_lo:
            r_lo, r_hi = space.min_distance / 2.0, space.diameter / lam_max
    else:
        r_lo, r_hi = radius_range
    samples = []
    for _ in range(sample_count):
        x = int(rng.integers(0, space.n_points))
        r = float(rng.uniform(r_lo, r_hi))
        lam = float(lambda_grid[int(rng.integers(0, len(lambda_grid)))])
        ratio = space.ball_mass(x, lam * r) / space.ball_mass(x, r)
        samples.append((x, r, lam, ratio))
    logl = np.array([math.log(s[2]) for s in samples])
    logr = np.array([math.log(s[3]) for s in samples])
    denom = float(np.dot(logl, logl))
    n_hat = float(np.dot(logl, logr) / denom) if denom > 0 else 0.0
    per_sample = logr / logl
    kappa_hat = max(0.0, min(n_hat, float(np.percentile(per_sample, 10))))
    ratios = np.array([s[3] for s in samples])
    lams = np.array([s[2] for s in samples])
    C2_hat = max(1.0, float(np.max(ratios / lams ** n_hat)))
    C1_hat = min(1.0, float(np.min(ratios / lams ** kappa_hat)))
    return DoublingReport(C1_hat=C1_hat, C2_hat=C2_hat, kappa_hat=kappa_hat,
                          n_hat=n_hat, samples=samples)


def space_to_dict(space: MetricMeasureSpace) -> dict:
    """JSON-ready description: {"topology", "coords", "dist", "measure", ...}."""
    out = {"topology": space.topology, "measure": space.measure.tolist()}
    if space.grid_info is not None:
        out["grid"] = {"n_dim": space.grid_info[0],
                       "resolution": space.grid_info[1],
                       "side_length": space.grid_info[2]}
    if space.coords is not None:
        out["coords"] = space.coords.tolist()
    if space.topology != "periodic_grid":
        out["dist"] = space.dist_matrix.tolist()
    return out


def space_from_dict(data: dict) -> MetricMeasureSpace:
    if data["topology"] == "periodic_grid":
        g = data["grid"]
        space = build_periodic_grid(g["n_dim"], g["resolution"], g["side_length"])
        if "measure" in data and not np.allclose(space.measure, data["measure"]):
            raise MetricValidationError("grid measure must be uniform h^n")
        return space
    return build_point_cloud(np.asarray(data["dist"], dtype=float),
                             np.asarray(data["measure"], dtype=float))

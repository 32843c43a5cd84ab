"""Scalar fields on spaces and seeded generators of test-function families."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .space import MetricMeasureSpace


class ConfigError(ValueError):
    """A generator spec is incompatible with the target space."""


@dataclass(frozen=True)
class ScalarField:
    """One real value per point of a space."""

    space: MetricMeasureSpace
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.space.n_points,):
            raise ValueError(f"field has {v.shape} values for "
                             f"{self.space.n_points} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def shifted(self, c: float) -> "ScalarField":
        return ScalarField(self.space, self.values + c, self.label)

    def scaled(self, a: float) -> "ScalarField":
        return ScalarField(self.space, a * self.values, self.label)


@dataclass(frozen=True)
class FunctionFamilySpec:
    """Deterministic recipe for a finite family of test fields.

    kind: trig_polynomial | bump_mixture | lipschitz_random | constant.
    Identical specs produce bit-identical families.
    """

    kind: str
    count: int = 16
    degree: int = 3
    amplitude: tuple = (0.5, 2.0)
    rng_seed: int = 0

    def spec_hash(self) -> str:
        payload = json.dumps({"kind": self.kind, "count": self.count,
                              "degree": self.degree,
                              "amplitude": list(self.amplitude),
                              "rng_seed": self.rng_seed}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _trig_field(space, degree, amplitude, rng):
    info = space.grid_info
    n_dim, _, side = info
    x = space.coords / side  # unit torus coordinates
    values = np.zeros(space.n_points)
    freqs = []
    for m in np.ndindex(*([2 * degree + 1] * n_dim)):
        vec = np.array(m) - degree
        if np.all(vec == 0):
            continue
        freqs.append(vec)
    for vec in freqs:
        amp = rng.uniform(*amplitude) / len(freqs)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        values += amp * np.cos(2.0 * np.pi * (x @ vec) + phase)
    return values


def _bump_field(space, degree, amplitude, rng):
    # mixture of geodesic Gaussian bumps; works on any space
    n_bumps = max(1, degree)
    diam = space.diameter
    values = np.zeros(space.n_points)
    for _ in range(n_bumps):
        center = int(rng.integers(0, space.n_points))
        width = rng.uniform(0.1, 0.35) * max(diam, 1e-12)
        amp = rng.uniform(*amplitude) * rng.choice([-1.0, 1.0])
        d = space.dist_row(center)
        values += amp * np.exp(-0.5 * (d / width) ** 2)
    return values


def _lipschitz_field(space, degree, amplitude, rng):
    # sums of distance cones a_i * d(x, c_i): Lipschitz constant <= sum |a_i|
    n_cones = max(1, degree)
    values = np.zeros(space.n_points)
    for _ in range(n_cones):
        center = int(rng.integers(0, space.n_points))
        amp = rng.uniform(*amplitude) * rng.choice([-1.0, 1.0])
        values += amp * space.dist_row(center)
    return values


def generate_family(space: MetricMeasureSpace, spec: FunctionFamilySpec):
    """Deterministic list of ScalarFields drawn per the spec."""
    if spec.kind == "trig_polynomial" and space.topology != "periodic_grid":
        raise ConfigError("trig_polynomial fields need a periodic grid")
    rng = np.random.default_rng(spec.rng_seed)
    makers = {"trig_polynomial": _trig_field,
              "bump_mixture": _bump_field,
              "lipschitz_random": _lipschitz_field}
    fields = []
    tag = spec.spec_hash()
    for i in range(spec.count):
        if spec.kind == "constant":
            values = np.full(space.n_points, spec.amplitude[1])
        elif spec.kind in makers:
            values = makers[spec.kind](space, spec.degree, spec.amplitude, rng)
        else:
            raise ConfigError(f"unknown family kind {spec.kind!r}")
        fields.append(ScalarField(space, values, label=f"{tag}:{i}"))
    return fields


def lipschitz_constant(space: MetricMeasureSpace, field: ScalarField) -> float:
    """max over pairs of |u(x) - u(y)| / d(x, y); 0 for a single point."""
    u = field.values
    if space.n_points < 2:
        return 0.0
    best = 0.0
    for i in range(space.n_points):
        d = space.dist_row(i)
        diff = np.abs(u - u[i])
        mask = d > 0
        if np.any(mask):
            best = max(best, float(np.max(diff[mask] / d[mask])))
    return best


def field_to_dict(field: ScalarField) -> dict:
    return {"space": field.space.content_hash(),
            "values": field.values.tolist(),
            "label": field.label}


def field_from_dict(space: MetricMeasureSpace, data: dict) -> ScalarField:
    if data.get("space") and data["space"] != space.content_hash():
        raise ConfigError("field file was generated for a different space")
    return ScalarField(space, np.asarray(data["values"], dtype=float),
                       data.get("label", ""))

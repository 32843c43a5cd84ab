"""Finite dictionaries of smooth mean-zero test atoms.

Atoms are finite combinations of Gaussians, so values, first derivatives,
and Fourier transforms are all closed-form.  Each atom integrates to zero
and is normalized so that a discretized decay seminorm

    S(phi) = sup_x (1 + |x|)^m  max(|phi(x)|, max_i |d_i phi(x)|)

is at most one (sup taken over a fixed deterministic sample cloud).  The
sup over a finite dictionary under-approximates the sup over the full test
class, so grand quantities built on it are one-sided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# base width: puts the peak response of the dilated-difference atom at
# frequency 1 cycle per unit length (beta* = sqrt((2/3) ln 4) = 2 pi sigma)
BASE_SIGMA = math.sqrt((2.0 / 3.0) * math.log(4.0)) / (2.0 * math.pi)


@dataclass(frozen=True)
class GaussianAtom:
    """sum_t coef_t exp(-|x - center_t|^2 / (2 sigma_t^2)) in n_dim variables."""

    n_dim: int
    terms: tuple  # of (coef, center ndarray, sigma)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for coef, center, sigma in self.terms:
            d2 = np.sum((x - center) ** 2, axis=-1)
            out += coef * np.exp(-0.5 * d2 / sigma ** 2)
        return out

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for coef, center, sigma in self.terms:
            delta = x - center
            d2 = np.sum(delta ** 2, axis=-1)
            out += (-coef / sigma ** 2) * delta * \
                np.exp(-0.5 * d2 / sigma ** 2)[..., None]
        return out

    def fourier(self, xi):
        """Transform with the cycles convention, integral of phi e^(-2 pi i x.xi)."""
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1], dtype=complex)
        for coef, center, sigma in self.terms:
            xi2 = np.sum(xi ** 2, axis=-1)
            amp = coef * (2.0 * math.pi * sigma ** 2) ** (self.n_dim / 2.0)
            out += amp * np.exp(-2.0 * math.pi ** 2 * sigma ** 2 * xi2) * \
                np.exp(-2j * math.pi * np.sum(xi * center, axis=-1))
        return out

    def mean(self) -> float:
        return sum(coef * (2.0 * math.pi * sigma ** 2) ** (self.n_dim / 2.0)
                   for coef, _, sigma in self.terms)

    def rescaled(self, factor: float) -> "GaussianAtom":
        return GaussianAtom(self.n_dim, tuple((coef * factor, center, sigma)
                                              for coef, center, sigma in self.terms))


def _direction_set(n_dim: int) -> np.ndarray:
    if n_dim == 1:
        return np.array([[1.0], [-1.0]])
    if n_dim == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, 96, endpoint=False)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # Fibonacci sphere, deterministic
    count = 192
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def discretized_seminorm(atom: GaussianAtom, decay_power: float,
                         radius: float = 6.0, n_radii: int = 768) -> float:
    """sup over a fixed radial/directional cloud of (1+|x|)^m max(|phi|, |grad phi|)."""
    radii = np.linspace(0.0, radius, n_radii)
    dirs = _direction_set(atom.n_dim)
    pts = radii[:, None, None] * dirs[None, :, :]
    pts = pts.reshape(-1, atom.n_dim)
    weight = (1.0 + np.sqrt(np.sum(pts ** 2, axis=-1))) ** decay_power
    vals = np.abs(atom.value(pts))
    grads = np.max(np.abs(atom.gradient(pts)), axis=-1)
    return float(np.max(weight * np.maximum(vals, grads)))


@dataclass(frozen=True)
class AtomDictionary:
    n_dim: int
    atoms: tuple
    decay_power: float
    label: str = ""

    def __len__(self):
        return len(self.atoms)


def default_dictionary(n_dim: int, decay_power: float | None = None,
                       base_sigma: float = BASE_SIGMA) -> AtomDictionary:
    """Dilated-difference and shifted-difference atoms, normalized.

    Two radial band atoms (difference of a bump and its 2-dilate, at widths
    sigma and sigma/2) plus one odd first-difference atom per axis.
    """
    if decay_power is None:
        decay_power = n_dim + 2  # m > n + 1
    zero = np.zeros(n_dim)
    raw = []
    for sigma in (base_sigma, base_sigma / 2.0):
        raw.append(GaussianAtom(n_dim, ((1.0, zero, sigma),
                                        (-(2.0 ** -n_dim), zero, 2.0 * sigma))))
    for axis in range(n_dim):
        shift = np.zeros(n_dim)
        shift[axis] = base_sigma
        raw.append(GaussianAtom(n_dim, ((1.0, shift, base_sigma),
                                        (-1.0, zero, base_sigma))))
    atoms = []
    for atom in raw:
        if abs(atom.mean()) > 1e-12:
            raise AssertionError("atom is not mean-zero")
        s = discretized_seminorm(atom, decay_power)
        atoms.append(atom.rescaled(1.0 / s))
    return AtomDictionary(n_dim, tuple(atoms), decay_power,
                          label=f"default-{n_dim}d")

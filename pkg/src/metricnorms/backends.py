"""Uniform entry point for computing a smoothness norm by any backend.

Backends: "optimal" (convex program over gradient sequences), "difference"
(annulus difference-quotient gradient), "grand" (dictionary maximal
gradient), "lp" (frequency-band norms, grids only), "bp" (double-sum
difference norm).  Families "M"/"F" aggregate L^p(l^q), "N"/"B" aggregate
l^q(L^p), "Sobolev" uses the single-gradient program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .norms import NormParams, aggregate, bourdon_pajot_norm
from .gradients import difference_gradient, grand_maximal_gradient
from .optimize import build_program, build_sobolev_program, solve, SolveConfig
from .atoms import default_dictionary
from . import lp_bands

_POINTWISE = ("M", "F", "Sobolev")


@dataclass
class BackendOptions:
    solver: SolveConfig = field(default_factory=SolveConfig)
    K0: int = 2
    dictionary: object = None
    bank: object = None


_bank_cache: dict = {}
_dict_cache: dict = {}


def _bank_for(space, squared=False):
    key = (space.content_hash(), squared)
    if key not in _bank_cache:
        _bank_cache[key] = lp_bands.build_band_filters(space,
                                                       squared_partition=squared)
    return _bank_cache[key]


def _dictionary_for(n_dim):
    if n_dim not in _dict_cache:
        _dict_cache[n_dim] = default_dictionary(n_dim)
    return _dict_cache[n_dim]


def _mode_for(family: str) -> str:
    return "Lp_lq" if family in _POINTWISE else "lq_Lp"


def compute_norm(space, field_u, params: NormParams, backend: str,
                 options: BackendOptions | None = None) -> float:
    opts = options or BackendOptions()
    s, p, q = params.s, params.p, params.q
    if backend == "optimal":
        if params.family == "Sobolev":
            prog = build_sobolev_program(space, field_u, s, p)
        else:
            prog = build_program(space, field_u, s, p, q, _mode_for(params.family))
        return solve(prog, opts.solver).upper_bound
    if backend == "difference":
        p_con = max(p, 1.0) if p < float("inf") else 1.0
        grad = difference_gradient(space, field_u, s, p_con, K0=opts.K0)
        return aggregate(space, grad, p, q, _mode_for(params.family))
    if backend == "grand":
        dictionary = opts.dictionary or _dictionary_for(space.grid_info[0])
        grad = grand_maximal_gradient(space, field_u, s, dictionary)
        return aggregate(space, grad, p, q, _mode_for(params.family))
    if backend == "lp":
        bank = opts.bank or _bank_for(space)
        coeffs = lp_bands.band_decompose(field_u, bank)
        if params.family in _POINTWISE or params.family == "F":
            return lp_bands.tl_norm(coeffs, s, p, q)
        return lp_bands.besov_norm(coeffs, s, p, q)
    if backend == "bp":
        return bourdon_pajot_norm(space, field_u, s, p)
    raise ValueError(f"unknown norm backend {backend!r}")

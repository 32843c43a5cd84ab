"""Experiment specs, deterministic reports, and the content-addressed cache.

A spec is plain JSON data; its canonical serialization is hashed and the
hash is embedded in every output, so re-running an identical spec
reproduces identical files.  Reports are cached whole under the spec hash
(directory from METRICNORMS_CACHE or the spec), with atomic
write-temp-rename; eviction is manual.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .space import build_periodic_grid, space_from_dict, estimate_doubling
from .fields import FunctionFamilySpec, generate_family, ConfigError
from .norms import NormParams
from .backends import compute_norm, BackendOptions
from .optimize import SolveConfig
from .qcmap import build_map, invariance_experiment

CACHE_ENV = "METRICNORMS_CACHE"


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def spec_hash(data) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str                  # norm_table | ratio_table | equivalence_table | diagnostics
    space: dict
    family: dict | None = None
    norm_params: tuple = ()
    map: dict | None = None
    backends: tuple = ("optimal",)
    rng_seed: int = 0
    solver: dict | None = None
    cache_dir: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "space": self.space, "family": self.family,
                "norm_params": list(self.norm_params), "map": self.map,
                "backends": list(self.backends), "rng_seed": self.rng_seed,
                "solver": self.solver}

    def hash(self) -> str:
        return spec_hash(self.to_dict())


def spec_from_dict(data: dict) -> ExperimentSpec:
    return ExperimentSpec(kind=data["kind"], space=data["space"],
                          family=data.get("family"),
                          norm_params=tuple(data.get("norm_params", ())),
                          map=data.get("map"),
                          backends=tuple(data.get("backends", ("optimal",))),
                          rng_seed=data.get("rng_seed", 0),
                          solver=data.get("solver"),
                          cache_dir=data.get("cache_dir"))


@dataclass
class Report:
    kind: str
    spec_hash: str
    tool_version: str
    rows: list
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "spec_hash": self.spec_hash,
                "tool_version": self.tool_version, "rows": self.rows,
                "extras": self.extras}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def _resolve_cache_dir(spec) -> str | None:
    return spec.cache_dir or os.environ.get(CACHE_ENV)


def _atomic_write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_space(space_data: dict):
    if "grid" in space_data:
        g = space_data["grid"]
        return build_periodic_grid(g["n_dim"], g["resolution"], g["side_length"])
    if "file" in space_data:
        with open(space_data["file"]) as handle:
            return space_from_dict(json.load(handle))
    return space_from_dict(space_data)


def _family_spec(spec: ExperimentSpec) -> FunctionFamilySpec:
    fam = dict(spec.family or {})
    fam.setdefault("rng_seed", spec.rng_seed)
    fam.setdefault("kind", "trig_polynomial")
    amp = fam.get("amplitude")
    if amp is not None:
        fam["amplitude"] = tuple(amp)
    return FunctionFamilySpec(**fam)


def _norm_params(spec: ExperimentSpec):
    out = []
    for item in spec.norm_params:
        d = dict(item)
        d.setdefault("family", "M")
        for key in ("p", "q"):
            if d.get(key) in ("inf", "Infinity"):
                d[key] = math.inf
        out.append(NormParams(**d))
    return out


def _options(spec: ExperimentSpec) -> BackendOptions:
    opts = BackendOptions()
    if spec.solver:
        opts.solver = SolveConfig(**spec.solver)
    return opts


def _json_num(x: float):
    if math.isinf(x):
        return "inf"
    return x


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   use_cache: bool = True) -> Report:
    """Execute a spec; deterministic, cached whole by spec hash."""
    h = spec.hash()
    cache_dir = _resolve_cache_dir(spec)
    cache_path = os.path.join(cache_dir, f"report-{h}.json") if cache_dir else None
    if use_cache and cache_path and os.path.exists(cache_path):
        with open(cache_path) as handle:
            data = json.load(handle)
        return Report(kind=data["kind"], spec_hash=data["spec_hash"],
                      tool_version=data["tool_version"], rows=data["rows"],
                      extras=data.get("extras", {}))

    if spec.kind == "diagnostics":
        report = _run_diagnostics(spec, h)
    elif spec.kind in ("norm_table", "equivalence_table"):
        report = _run_norm_table(spec, h, threads)
    elif spec.kind == "ratio_table":
        report = _run_ratio_table(spec, h)
    else:
        raise ConfigError(f"unknown experiment kind {spec.kind!r} (field: kind)")

    if cache_path:
        _atomic_write(cache_path, report.to_json())
    return report


def _run_diagnostics(spec, h) -> Report:
    space = _build_space(spec.space)
    disco = estimate_doubling(space, rng_seed=spec.rng_seed)
    rows = [{"n_points": space.n_points, "diameter": space.diameter,
             "min_distance": space.min_distance,
             "total_measure": space.total_measure,
             "n_hat": disco.n_hat, "kappa_hat": disco.kappa_hat,
             "C1_hat": disco.C1_hat, "C2_hat": disco.C2_hat,
             "space_hash": space.content_hash()}]
    return Report("diagnostics", h, __version__, rows)


def _run_norm_table(spec, h, threads) -> Report:
    space = _build_space(spec.space)
    fam = _family_spec(spec)
    fields = generate_family(space, fam)
    params_list = _norm_params(spec)
    opts = _options(spec)
    jobs = [(f, params, backend)
            for f in fields for params in params_list for backend in spec.backends]

    def work(job):
        f, params, backend = job
        value = compute_norm(space, f, params, backend, opts)
        return {"field": f.label, "s": params.s, "p": _json_num(params.p),
                "q": _json_num(params.q), "family": params.family,
                "backend": backend, "value": value,
                "space_hash": space.content_hash()}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    extras = {"family_hash": fam.spec_hash(), "diameter": space.diameter}
    if spec.kind == "equivalence_table":
        extras["pairwise_spread"] = _pairwise_spread(rows, spec.backends)
    return Report(spec.kind, h, __version__, rows, extras)


def _pairwise_spread(rows, backends) -> dict:
    """max/min over the family of the ratio backend_a / backend_b, per params."""
    by_key: dict = {}
    for row in rows:
        key = (row["s"], row["p"], row["q"], row["family"])
        by_key.setdefault(key, {}).setdefault(row["backend"], {})[row["field"]] = row["value"]
    out = {}
    for key, table in by_key.items():
        for i, a in enumerate(backends):
            for b in backends[i + 1:]:
                if a not in table or b not in table:
                    continue
                ratios = [table[a][f] / table[b][f]
                          for f in table[a] if table[b].get(f, 0) > 0]
                if not ratios:
                    continue
                tag = f"s={key[0]},p={key[1]},q={key[2]}:{a}/{b}"
                out[tag] = {"min": min(ratios), "max": max(ratios),
                            "spread": max(ratios) / min(ratios)}
    return out


def _run_ratio_table(spec, h) -> Report:
    if spec.map is None:
        raise ConfigError("ratio_table requires a map (field: map)")
    source = _build_space(spec.space)
    map_conf = dict(spec.map)
    kind = map_conf.pop("kind")
    map_sample = build_map(source, kind, **map_conf)
    fam = _family_spec(spec)
    params_list = _norm_params(spec)
    opts = _options(spec)
    rows = []
    summaries = {}
    for backend in spec.backends:
        ratio_report = invariance_experiment(map_sample, fam, params_list,
                                             backend, opts)
        for r in ratio_report.rows:
            rows.append({"field": r.field_label, "s": r.s,
                         "p": _json_num(r.p), "q": _json_num(r.q),
                         "backend": backend, "norm_target": r.norm_target,
                         "norm_source": r.norm_source, "ratio": r.ratio})
        for key, (lo, hi, gm) in ratio_report.summary().items():
            tag = f"{backend}:s={key[0]},p={_json_num(key[1])},q={_json_num(key[2])}"
            summaries[tag] = {"min": lo, "max": hi, "geomean": gm}
    extras = {"map": spec.map, "family_hash": fam.spec_hash(),
              "summary": summaries}
    return Report("ratio_table", h, __version__, rows, extras)


def convert(report: Report, fmt: str) -> str:
    """Render a report: lossless JSON or flattened CSV rows."""
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        buf = io.StringIO()
        keys = sorted({k for row in report.rows for k in row})
        writer = csv.DictWriter(buf, fieldnames=keys)
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row)
        return buf.getvalue()
    raise ConfigError(f"unknown format {fmt!r} (expected csv or json)")

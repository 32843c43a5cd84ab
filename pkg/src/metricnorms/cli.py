"""Command line front end.

Subcommands mirror the library layout: space, field, grad, norm, opt, lp,
qc, experiment, report.  All files are JSON unless --csv is given; the
experiment cache directory comes from METRICNORMS_CACHE.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .space import (build_periodic_grid, space_from_dict, space_to_dict,
                    MetricValidationError)
from .fields import (ScalarField, FunctionFamilySpec, generate_family,
                     field_to_dict, field_from_dict)
from .gradients import (base_class, shifted_class, lower_tail_class,
                        upper_tail_class, check_membership, difference_gradient,
                        grand_maximal_gradient, gradient_to_dict,
                        gradient_from_dict, warn_infinity_restriction)
from .atoms import default_dictionary
from .norms import NormParams
from .optimize import build_program, build_sobolev_program, solve, SolveConfig
from .backends import compute_norm, BackendOptions
from . import lp_bands
from .qcmap import (build_map, analyze_distortion, volume_derivative,
                    invariance_experiment, interior_mask)
from .experiment import (ExperimentSpec, spec_from_dict, run_experiment,
                         convert, Report, canonical_json)


def _parse_exponent(text):
    if text in ("inf", "Inf", "infinity"):
        return math.inf
    return float(text)


def _load_json(path):
    with open(path) as handle:
        return json.load(handle)


def _dump(data, path=None):
    text = canonical_json(data) if not isinstance(data, str) else data
    if path:
        with open(path, "w") as handle:
            handle.write(text)
    else:
        print(text)


def _load_space(path):
    return space_from_dict(_load_json(path))


def _load_field(space, path):
    data = _load_json(path)
    if isinstance(data, list):
        data = data[0]
    if "fields" in data:
        data = data["fields"][0]
    return field_from_dict(space, data)


def _parse_map_arg(text):
    """'identity', 'radial:a=1.5', 'dilation:2', 'linear:2,0,0,1'."""
    if text == "identity":
        return "identity", {}
    kind, _, rest = text.partition(":")
    if kind == "radial":
        return "radial_power", {"a": float(rest.split("=")[-1])}
    if kind == "dilation":
        return "dilation", {"factor": float(rest or 2.0)}
    if kind == "linear":
        vals = [float(v) for v in rest.split(",")]
        dim = int(math.isqrt(len(vals)))
        return "linear", {"matrix": np.array(vals).reshape(dim, dim)}
    raise SystemExit(f"cannot parse map spec {text!r}")


def _class_from_args(args):
    if args.cls == "base":
        return base_class(args.s)
    if args.cls == "shifted":
        return shifted_class(args.s, args.N1, args.N2)
    if args.cls == "lower":
        return lower_tail_class(args.s, args.epsilon, args.N)
    return upper_tail_class(args.s, args.epsilon, args.N)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="metricnorms",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0, help="global rng seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for experiment field loops")
    sub = parser.add_subparsers(dest="command", required=True)

    p_space = sub.add_parser("space", help="build and validate spaces")
    space_sub = p_space.add_subparsers(dest="action", required=True)
    p_grid = space_sub.add_parser("build-grid")
    p_grid.add_argument("--dim", type=int, required=True)
    p_grid.add_argument("--resolution", type=int, required=True)
    p_grid.add_argument("--side", type=float, default=1.0)
    p_grid.add_argument("-o", "--out")
    p_val = space_sub.add_parser("validate")
    p_val.add_argument("file")

    p_field = sub.add_parser("field", help="generate field families")
    field_sub = p_field.add_subparsers(dest="action", required=True)
    p_gen = field_sub.add_parser("gen")
    p_gen.add_argument("--space", required=True)
    p_gen.add_argument("--spec", help="JSON file with family spec fields")
    p_gen.add_argument("--kind", default="trig_polynomial")
    p_gen.add_argument("--count", type=int, default=16)
    p_gen.add_argument("--degree", type=int, default=3)
    p_gen.add_argument("-o", "--out")

    p_grad = sub.add_parser("grad", help="gradient construction and checks")
    grad_sub = p_grad.add_subparsers(dest="action", required=True)
    p_check = grad_sub.add_parser("check")
    p_check.add_argument("--space", required=True)
    p_check.add_argument("--field", required=True)
    p_check.add_argument("--grad", required=True)
    p_check.add_argument("--s", type=float, required=True)
    p_check.add_argument("--cls", default="base",
                         choices=["base", "shifted", "lower", "upper"])
    p_check.add_argument("--N1", type=int, default=0)
    p_check.add_argument("--N2", type=int, default=0)
    p_check.add_argument("--N", type=int, default=0)
    p_check.add_argument("--epsilon", type=float, default=0.5)
    p_check.add_argument("--p", type=_parse_exponent, default=2.0)
    p_build = grad_sub.add_parser("build")
    p_build.add_argument("--method", choices=["diff", "grand"], required=True)
    p_build.add_argument("--space", required=True)
    p_build.add_argument("--field", required=True)
    p_build.add_argument("--s", type=float, required=True)
    p_build.add_argument("--p", type=float, default=1.0)
    p_build.add_argument("--K0", type=int, default=2)
    p_build.add_argument("-o", "--out")

    p_norm = sub.add_parser("norm", help="compute a smoothness norm")
    p_norm.add_argument("compute", nargs="?", default="compute")
    p_norm.add_argument("--space", required=True)
    p_norm.add_argument("--field", required=True)
    p_norm.add_argument("--family", default="M",
                        choices=["M", "N", "F", "B", "BP", "Sobolev"])
    p_norm.add_argument("--s", type=float, required=True)
    p_norm.add_argument("--p", type=_parse_exponent, required=True)
    p_norm.add_argument("--q", type=_parse_exponent, default=2.0)
    p_norm.add_argument("--backend", default="optimal")
    p_norm.add_argument("-o", "--out")

    p_opt = sub.add_parser("opt", help="solve the infimal norm program")
    p_opt.add_argument("solve", nargs="?", default="solve")
    p_opt.add_argument("--space", required=True)
    p_opt.add_argument("--field", required=True)
    p_opt.add_argument("--s", type=float, required=True)
    p_opt.add_argument("--p", type=_parse_exponent, required=True)
    p_opt.add_argument("--q", type=_parse_exponent, required=True)
    p_opt.add_argument("--mode", default="Lp_lq", choices=["Lp_lq", "lq_Lp"])
    p_opt.add_argument("--sobolev", action="store_true")
    p_opt.add_argument("--max-iters", type=int)
    p_opt.add_argument("--tol", type=float, default=1e-6)
    p_opt.add_argument("-o", "--out")

    p_lp = sub.add_parser("lp", help="frequency-band norms on grids")
    p_lp.add_argument("norm", nargs="?", default="norm")
    p_lp.add_argument("--space", required=True)
    p_lp.add_argument("--field", required=True)
    p_lp.add_argument("--s", type=float, required=True)
    p_lp.add_argument("--p", type=_parse_exponent, required=True)
    p_lp.add_argument("--q", type=_parse_exponent, required=True)
    p_lp.add_argument("--family", default="F",
                      choices=["F", "B", "grandF", "grandB"])
    p_lp.add_argument("-o", "--out")

    p_qc = sub.add_parser("qc", help="quasiconformal map analysis")
    qc_sub = p_qc.add_subparsers(dest="action", required=True)
    for name in ("analyze", "jacobian", "invariance"):
        q = qc_sub.add_parser(name)
        q.add_argument("--source", required=True, help="source space JSON")
        q.add_argument("--map", required=True, help="e.g. radial:a=1.5")
        q.add_argument("-o", "--out")
        if name == "invariance":
            q.add_argument("--s", type=float, required=True)
            q.add_argument("--p", type=_parse_exponent, required=True)
            q.add_argument("--q", type=_parse_exponent, required=True)
            q.add_argument("--backend", default="difference",
                           choices=["optimal", "difference", "grand", "lp"])
            q.add_argument("--count", type=int, default=16)
            q.add_argument("--csv", action="store_true")

    p_exp = sub.add_parser("experiment", help="run a full experiment spec")
    p_exp.add_argument("run", nargs="?", default="run")
    p_exp.add_argument("spec", help="experiment spec JSON file")
    p_exp.add_argument("--csv", action="store_true")
    p_exp.add_argument("--no-cache", action="store_true")
    p_exp.add_argument("-o", "--out")

    p_rep = sub.add_parser("report", help="convert stored reports")
    p_rep.add_argument("convert", nargs="?", default="convert")
    p_rep.add_argument("file")
    p_rep.add_argument("--format", default="csv", choices=["csv", "json"])
    p_rep.add_argument("-o", "--out")

    args = parser.parse_args(argv)
    return _dispatch(parser, args)


def _dispatch(parser, args):
    cmd = args.command
    if cmd == "space":
        if args.action == "build-grid":
            space = build_periodic_grid(args.dim, args.resolution, args.side)
            _dump(space_to_dict(space), args.out)
        else:
            try:
                space = _load_space(args.file)
            except MetricValidationError as exc:
                print(f"INVALID: {exc}")
                return 1
            print(f"valid space: {space.n_points} points, "
                  f"diameter {space.diameter:.6g}, hash {space.content_hash()}")
        return 0

    if cmd == "field":
        space = _load_space(args.space)
        if args.spec:
            conf = _load_json(args.spec)
            conf.setdefault("rng_seed", args.seed)
            if "amplitude" in conf:
                conf["amplitude"] = tuple(conf["amplitude"])
            spec = FunctionFamilySpec(**conf)
        else:
            spec = FunctionFamilySpec(kind=args.kind, count=args.count,
                                      degree=args.degree, rng_seed=args.seed)
        fields = generate_family(space, spec)
        _dump({"space": space.content_hash(),
               "fields": [field_to_dict(f) for f in fields]}, args.out)
        return 0

    if cmd == "grad":
        space = _load_space(args.space)
        u = _load_field(space, args.field)
        if args.action == "check":
            grad = gradient_from_dict(space, _load_json(args.grad))
            cls = _class_from_args(args)
            warn_infinity_restriction(cls, args.p)
            rep = check_membership(space, u, grad, cls)
            _dump({"rho_min": rep.rho_min if math.isfinite(rep.rho_min) else "inf",
                   "worst_pair": rep.worst_pair, "violated": rep.violated_count,
                   "n_constraints": rep.n_constraints,
                   "is_member": rep.is_member})
        else:
            if args.method == "diff":
                grad = difference_gradient(space, u, args.s, args.p, args.K0)
            else:
                grad = grand_maximal_gradient(space, u, args.s,
                                              default_dictionary(space.grid_info[0]))
            _dump(gradient_to_dict(grad), args.out)
        return 0

    if cmd == "norm":
        space = _load_space(args.space)
        u = _load_field(space, args.field)
        params = NormParams(s=args.s, p=args.p, q=args.q, family=args.family)
        backend = "bp" if args.family == "BP" else args.backend
        value = compute_norm(space, u, params, backend)
        _dump({"value": value,
               "params": {"s": args.s, "p": str(args.p), "q": str(args.q),
                          "family": args.family, "backend": backend},
               "space_hash": space.content_hash()}, args.out)
        return 0

    if cmd == "opt":
        space = _load_space(args.space)
        u = _load_field(space, args.field)
        if args.sobolev:
            prog = build_sobolev_program(space, u, args.s, args.p)
        else:
            prog = build_program(space, u, args.s, args.p, args.q, args.mode)
        res = solve(prog, SolveConfig(max_iters=args.max_iters, tol=args.tol))
        _dump({"upper_bound": res.upper_bound, "iterations": res.iterations,
               "converged": res.converged, "method": res.method,
               "heuristic": res.heuristic,
               "gradient": gradient_to_dict(res.iterate_gradient),
               "space_hash": space.content_hash()}, args.out)
        return 0

    if cmd == "lp":
        space = _load_space(args.space)
        u = _load_field(space, args.field)
        if args.family in ("grandF", "grandB"):
            value = lp_bands.grand_norm(u, args.s, args.p, args.q,
                                        default_dictionary(space.grid_info[0]),
                                        family=args.family[-1])
        else:
            bank = lp_bands.build_band_filters(space)
            coeffs = lp_bands.band_decompose(u, bank)
            fn = lp_bands.tl_norm if args.family == "F" else lp_bands.besov_norm
            value = fn(coeffs, args.s, args.p, args.q)
        _dump({"value": value, "family": args.family,
               "s": args.s, "p": str(args.p), "q": str(args.q)}, args.out)
        return 0

    if cmd == "qc":
        source = _load_space(args.source)
        kind, kwargs = _parse_map_arg(args.map)
        map_sample = build_map(source, kind, **kwargs)
        if args.action == "analyze":
            mask = interior_mask(source) if source.topology == "periodic_grid" else None
            analysis = analyze_distortion(map_sample, mask=mask,
                                          rng_seed=args.seed)
            _dump({"H_hat": analysis.H_hat, "scales": analysis.scales,
                   "skipped": analysis.skipped,
                   "multiplicity_histogram": analysis.multiplicity_histogram},
                  args.out)
        elif args.action == "jacobian":
            vol = volume_derivative(map_sample)
            _dump({"radius": vol.radius, "mass_error": vol.mass_error,
                   "J_hat": vol.J_hat.tolist()}, args.out)
        else:
            fam = FunctionFamilySpec(kind="trig_polynomial", count=args.count,
                                     rng_seed=args.seed)
            params = [NormParams(s=args.s, p=args.p, q=args.q)]
            rep = invariance_experiment(map_sample, fam, params, args.backend)
            if args.csv:
                lines = ["field_id,s,p,q,ratio"]
                for r in rep.rows:
                    lines.append(f"{r.field_label},{r.s},{r.p},{r.q},{r.ratio}")
                _dump("\n".join(lines) + "\n", args.out)
            else:
                summary = {f"s={k[0]},p={k[1]},q={k[2]}":
                           {"min": v[0], "max": v[1], "geomean": v[2]}
                           for k, v in rep.summary().items()}
                _dump({"map": map_sample.family_tag, "backend": rep.backend,
                       "summary": summary}, args.out)
        return 0

    if cmd == "experiment":
        spec = spec_from_dict(_load_json(args.spec))
        report = run_experiment(spec, threads=args.threads,
                                use_cache=not args.no_cache)
        _dump(convert(report, "csv" if args.csv else "json"), args.out)
        return 0

    if cmd == "report":
        data = _load_json(args.file)
        report = Report(kind=data["kind"], spec_hash=data["spec_hash"],
                        tool_version=data["tool_version"], rows=data["rows"],
                        extras=data.get("extras", {}))
        _dump(convert(report, args.format), args.out)
        return 0

    parser.error(f"unknown command {cmd}")


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: ``ajd <subcommand> ...``.

Exit codes: 0 success, 2 invalid input (unreadable file, schema or
admissibility violation, failed classification gate), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io
from .calibrate import default_grid, fit
from .errors import (
    AJDError,
    SimulationError,
    TransformDomainError,
    UnstableMatrixError,
)
from .limits import (
    corollary_cov,
    corollary_mean,
    fclt_diagnostic,
    parse_h,
    time_ergodic_report,
)
from .model import validate_spec
from .riccati import solve_transform
from .simulate import (
    DEFAULT_DT,
    DEFAULT_SEED,
    escape_fractions,
    hitting_times,
    simulate_path,
    simulate_paths,
    simulate_skeleton,
)
from .stability import TRANSIENT_1D, classify, find_transience_epsilon

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _complexes(text):
    try:
        return np.array([complex(v.strip()) for v in str(text).split(",") if v.strip()])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse complex vector {text!r}") from exc


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _x0(spec, args):
    if args.x0 is None:
        try:
            v = corollary_mean(spec)
        except UnstableMatrixError:
            v = np.ones(spec.d)
        v[: spec.m] = np.maximum(v[: spec.m], 0.0)
        return v
    x0 = np.array(_floats(args.x0))
    if x0.shape != (spec.d,):
        raise ValueError(f"--x0 needs {spec.d} values")
    return x0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_check(args):
    spec = io.load_spec(args.spec)
    report = validate_spec(spec)
    payload = {"validation": report.to_dict(), "stability": None}
    if report.admissible:
        payload["stability"] = classify(spec, args.p).to_dict()
    _emit(io.report_to_json("check", payload), args.out)
    return EXIT_OK if report.admissible else EXIT_INVALID


def cmd_simulate(args):
    spec = io.load_spec(args.spec)
    x0 = _x0(spec, args)
    if args.delta is not None:
        n = int(round(args.T / args.delta))
        skel = simulate_skeleton(spec, x0, args.delta, n, args.dt, args.seed)
        _emit(io.skeleton_to_csv(skel), args.out)
        return EXIT_OK
    paths = simulate_paths(spec, x0, args.T, args.paths, args.dt, args.seed,
                           record_stride=args.stride)
    _emit(io.paths_to_csv(paths), args.out)
    return EXIT_OK


def cmd_transform(args):
    spec = io.load_spec(args.spec)
    sol = solve_transform(spec, args.u, args.T, args.dt)
    _emit(io.transform_to_csv(sol, args.thin), args.out)
    return EXIT_OK


def cmd_stationary(args):
    spec = io.load_spec(args.spec)
    x0 = _x0(spec, args)
    h = parse_h(args.h)
    try:
        v, S = corollary_mean(spec), corollary_cov(spec)
    except UnstableMatrixError:
        v = S = None
    path = simulate_path(spec, x0, args.T, args.dt, args.seed, record_stride=args.stride)
    target = v if (v is not None and h.kind == "identity") else None
    report = time_ergodic_report(path, h, target, args.nbatches)
    payload = {
        "classification": classify(spec).label,
        "ergodic": report.to_dict(),
        "corollary_mean": v,
        "corollary_cov": S,
        "seed": args.seed,
        "dt": args.dt,
    }
    _emit(io.report_to_json("stationary", payload), args.out)
    return EXIT_OK


def cmd_fclt(args):
    spec = io.load_spec(args.spec)
    rep = fclt_diagnostic(spec, args.h, args.nblocks, args.horizon, args.replicates,
                          args.dt, args.seed, args.coord)
    _emit(io.report_to_json("fclt", rep.to_dict()), args.out)
    return EXIT_OK


def cmd_transience(args):
    spec = io.load_spec(args.spec)
    report = classify(spec)
    payload = {"classification": report.label, "effective_rate": report.eig_effective_max_re}
    if spec.d == 1 and spec.m == 1:
        found = find_transience_epsilon(spec)
        payload["h_positive_found"] = found is not None
        payload["epsilon"], payload["h_epsilon"] = found if found else (None, None)
    x0 = np.array(_floats(args.x0)) if args.x0 else np.ones(spec.d)
    hits = hitting_times(spec, x0, args.level, args.T, args.paths, args.dt, args.seed)
    grid = np.linspace(0.0, args.T, args.points + 1)[1:]
    payload.update({
        "transient": report.classification == TRANSIENT_1D,
        "level": args.level,
        "paths": args.paths,
        "times": grid,
        "escape_fraction": escape_fractions(hits, grid),
        "final_escape_fraction": float(np.mean(np.isfinite(hits))),
        "seed": args.seed,
    })
    _emit(io.report_to_json("transience", payload), args.out)
    return EXIT_OK


def cmd_calibrate(args):
    data = io.load_skeleton(args.data)
    template = io.load_spec(args.template)
    free = [f for item in args.free for f in item.split(";") if f]
    grid = default_grid(template.d, data.delta, tuple(_floats(args.grid)))
    res = fit(data, template, free, grid, budget=args.budget, restarts=args.restarts,
              seed=args.seed)
    _emit(io.report_to_json("calibrate", res.to_dict()), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ajd", description="Affine jump-diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", help="output file (default: stdout)")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("check", help="validate a spec and classify its stability")
    p.add_argument("spec")
    p.add_argument("--p", type=float, default=2.0, help="moment order for EXP_ERGODIC(p)")
    common(p, seed=False)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="simulate paths (CSV) or a skeleton with --delta")
    p.add_argument("spec")
    p.add_argument("--x0", help="comma-separated initial state (default: stationary mean)")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--stride", type=int, default=1, help="record every STRIDE steps")
    p.add_argument("--delta", type=float, help="write the delta-skeleton of path 0 instead")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("transform", help="solve the Riccati system (CSV)")
    p.add_argument("spec")
    p.add_argument("--u", type=_complexes, required=True, help="comma-separated complex vector, e.g. 1j,0")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--dt", type=float)
    p.add_argument("--thin", type=int, default=1, help="write every THIN grid points")
    common(p, seed=False)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("stationary", help="long-run average with batch-means CI (JSON)")
    p.add_argument("spec")
    p.add_argument("--x0")
    p.add_argument("--T", type=float, default=1e4)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--h", default="identity")
    p.add_argument("--nbatches", type=int)
    p.add_argument("--stride", type=int, default=10)
    common(p)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("fclt", help="functional CLT diagnostic (JSON)")
    p.add_argument("spec")
    p.add_argument("--replicates", type=int, default=500)
    p.add_argument("--horizon", type=float, default=400.0)
    p.add_argument("--nblocks", type=int, default=4)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--h", default="identity")
    p.add_argument("--coord", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_fclt)

    p = sub.add_parser("transience", help="transience check and escape fractions (JSON)")
    p.add_argument("spec")
    p.add_argument("--x0")
    p.add_argument("--level", type=float, default=100.0)
    p.add_argument("--T", type=float, default=50.0)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--points", type=int, default=50, help="number of escape-fraction times")
    common(p)
    p.set_defaults(func=cmd_transience)

    p = sub.add_parser("calibrate", help="fit free parameters to skeleton data (JSON)")
    p.add_argument("data", help="skeleton CSV written by 'ajd simulate --delta'")
    p.add_argument("template")
    p.add_argument("--free", action="append", default=[], help="free parameter, e.g. beta or beta[0,1]")
    p.add_argument("--grid", default="0.5,1,2", help="frequency scales s for u = s*i*e_j")
    p.add_argument("--budget", type=int, default=400)
    p.add_argument("--restarts", type=int, default=2)
    common(p)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TransformDomainError, SimulationError, UnstableMatrixError, ArithmeticError) as exc:
        print(f"ajd: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AJDError, ValueError, OSError) as exc:
        print(f"ajd: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

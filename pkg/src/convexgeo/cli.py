"""Command-line front end.

Every subcommand writes its machine-readable results under ``--out`` and
embeds the resolved configuration (including the seed) in its JSON
summary.  Exit codes: 0 success, 2 usage, 3 numerical failure,
4 inconclusive.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .convexity import certify
from .errors import CertificationError, ChartExitError, GeometryError, InapplicableError
from .flow import recurrence_experiment
from .functions import FUNCTIONS, get_function
from .geometry import DEFAULT_STEP, PhasePoint, geodesic_integrate
from .manifolds import MANIFOLDS, get_manifold, paraboloid_gaussian_curvature
from .minimize import (
    DEFAULT_SCHEDULE,
    _mu_equation,
    beta,
    loop_search,
    regularized_minimize,
    soul_region_check,
    solve_mu1,
)
from .warped import curvature_grid, m3_vertical_curvature, write_grid_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _clean(obj):
    """Make a summary JSON-safe: numpy to builtins, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _write_json(path: Path, summary: dict) -> str:
    text = json.dumps(_clean(summary), sort_keys=True, indent=2) + "\n"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return text


def _resolved(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "handler"}
    cfg["out"] = str(cfg["out"])
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _default_point(M):
    box = np.asarray(M.sample_box, dtype=float)
    return 0.5 * (box[:, 0] + box[:, 1])


def _vector(arg, n, what):
    if arg is None:
        return None
    if len(arg) != n:
        raise UsageError(f"--{what} needs {n} components, got {len(arg)}")
    return np.array(arg, dtype=float)


def _angular_momentum(name, xs, vs):
    """Clairaut invariant r^2 * angle' on the paraboloid charts."""
    if name == "paraboloid":
        return xs[:, 0] * vs[:, 1] - xs[:, 1] * vs[:, 0]
    if name == "paraboloid_polar":
        return xs[:, 0] ** 2 * vs[:, 1]
    return None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_geodesic(args) -> int:
    M = get_manifold(args.manifold)
    x0 = _vector(args.point, M.dim, "point")
    x0 = _default_point(M) if x0 is None else x0
    v0 = _vector(args.vector, M.dim, "vector")
    v0 = np.eye(M.dim)[0] if v0 is None else v0
    out = _outdir(args)
    code, exit_time = EXIT_OK, None
    try:
        path = geodesic_integrate(M, PhasePoint(x0, v0), args.T, args.step)
    except ChartExitError as exc:
        path, exit_time, code = exc.path, exc.exit_time, EXIT_NUMERIC
    path.to_csv(out / "geodesic.csv")
    summary = {
        "command": "geodesic",
        "config": _resolved(args),
        "seed": args.seed,
        "n_states": len(path),
        "step": path.step,
        "speed_drift": path.speed_drift(),
        "endpoint": {"point": path.points[-1], "vector": path.vectors[-1]},
        "chart_exit_time": exit_time,
    }
    L = _angular_momentum(M.name, path.points, path.vectors)
    if L is not None:
        summary["clairaut_drift"] = float(np.max(np.abs(L - L[0])))
    print(_write_json(out / "geodesic.json", summary), end="")
    return code


def _grid(box, n):
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def cmd_curvature(args) -> int:
    M = get_manifold(args.manifold)
    if args.manifold == "m3":
        def analytic(x):
            return m3_vertical_curvature(*x)
    elif args.manifold == "paraboloid":
        analytic = paraboloid_gaussian_curvature
    elif args.manifold in ("plane", "torus"):
        def analytic(x):
            return 0.0
    else:
        raise UsageError(f"no closed-form curvature for manifold {args.manifold!r}")
    lo, hi = args.box
    if not lo < hi:
        raise UsageError("--box needs LO < HI")
    rows = curvature_grid(M, _grid([(lo, hi)] * M.dim, args.n), analytic)
    out = _outdir(args)
    write_grid_csv(rows, out / "curvature.csv")
    max_err = max(r["abs_err"] for r in rows)
    summary = {
        "command": "curvature",
        "config": _resolved(args),
        "seed": args.seed,
        "n_points": len(rows),
        "plane": "last two coordinate directions",
        "max_abs_err": max_err,
        "within_tol": max_err <= args.tol,
        "K_analytic_range": [min(r["K_analytic"] for r in rows), max(r["K_analytic"] for r in rows)],
    }
    print(_write_json(out / "curvature.json", summary), end="")
    return EXIT_OK if max_err <= args.tol else EXIT_NUMERIC


def _parse_params(items) -> dict:
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _function(key, params):
    try:
        return get_function(key, **params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for function {key!r}: {exc}") from None


def cmd_certify(args) -> int:
    M = get_manifold(args.manifold)
    f = _function(args.function, _parse_params(args.param))
    box = None if args.box is None else [tuple(args.box)] * M.dim
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = certify(f, M, box=box, n_geodesics=args.n_geodesics, span=args.span, tol=args.tol,
                         seed=args.seed, workers=args.threads)
    summary = {"command": "certify", "config": _resolved(args), "seed": args.seed, "report": report.to_dict()}
    print(_write_json(_outdir(args) / "certify.json", summary), end="")
    return EXIT_INCONCLUSIVE if report.verdict == "inconclusive" else EXIT_OK


def cmd_recur(args) -> int:
    M = get_manifold(args.manifold)
    stats = recurrence_experiment(M, n_samples=args.samples, epsilon=args.epsilon, T=args.T,
                                  check_dt=args.check_dt, seed=args.seed, h=args.step, workers=args.threads)
    out = _outdir(args)
    stats.to_csv(out / "recur.csv")
    summary = {"command": "recur", "config": _resolved(args), "seed": args.seed, "result": stats.summary()}
    print(_write_json(out / "recur.json", summary), end="")
    return EXIT_OK


RUN_KEYS = {
    "manifold", "u", "u_params", "g", "g_params", "schedule", "p0", "x0", "tol", "stab_tol",
    "check_tol", "max_iter", "certify",
}
CERTIFY_KEYS = {"n_geodesics", "span", "tol", "box"}


def load_run(path, default_manifold: str) -> dict:
    """Read and validate a minimisation run descriptor."""
    try:
        with open(path, encoding="utf-8") as fh:
            run = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read run descriptor: {exc}") from None
    if not isinstance(run, dict):
        raise UsageError("run descriptor must be a JSON object")
    unknown = sorted(set(run) - RUN_KEYS)
    if unknown:
        raise UsageError(f"unknown key(s) in run descriptor: {', '.join(unknown)}")
    unknown = sorted(set(run.get("certify", {})) - CERTIFY_KEYS)
    if unknown:
        raise UsageError(f"unknown key(s) in run descriptor 'certify': {', '.join(unknown)}")
    for key in ("u", "g"):
        if key not in run:
            raise UsageError(f"run descriptor needs {key!r}")
        if run[key] not in FUNCTIONS:
            raise UsageError(f"unknown function {run[key]!r} for {key!r}; choose from {sorted(FUNCTIONS)}")
    resolved = {
        "manifold": default_manifold,
        "u_params": {},
        "g_params": {},
        "schedule": list(DEFAULT_SCHEDULE),
        "p0": None,
        "x0": None,
        "tol": 1e-8,
        "stab_tol": 1e-6,
        "check_tol": 1e-8,
        "max_iter": 500,
        "certify": {},
    }
    resolved.update(run)
    if resolved["manifold"] not in MANIFOLDS:
        raise UsageError(f"unknown manifold {resolved['manifold']!r}")
    return resolved


def cmd_minimize(args) -> int:
    run = load_run(args.config, args.manifold)
    M = get_manifold(run["manifold"])
    u = _function(run["u"], run["u_params"])
    g = _function(run["g"], run["g_params"])
    p0 = np.zeros(M.dim) if run["p0"] is None else _vector(run["p0"], M.dim, "p0")
    cert = dict(run["certify"])
    box = cert.pop("box", None)
    if box is not None:
        box = [tuple(box)] * M.dim
    out = _outdir(args)
    summary = {"command": "minimize", "config": _resolved(args), "run": run, "seed": args.seed}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = regularized_minimize(
                M, u, g, p0, schedule=run["schedule"], x0=run["x0"], tol=run["tol"],
                stab_tol=run["stab_tol"], check_tol=run["check_tol"], max_iter=run["max_iter"],
                certify_box=box, seed=args.seed, workers=args.threads, **cert)
    except CertificationError as exc:
        summary.update(status="certification-failed", error=str(exc),
                       report=None if exc.report is None else exc.report.to_dict())
        print(_write_json(out / "minimize.json", summary), end="")
        return EXIT_NUMERIC
    trace.to_csv(out / "trace.csv")
    summary["trace"] = trace.summary()
    if M.name == "paraboloid":
        try:
            summary["soul_region"] = {"beta": beta(), "holds": soul_region_check(trace)}
        except InapplicableError as exc:
            summary["soul_region"] = {"beta": beta(), "holds": None, "note": str(exc)}
    print(_write_json(out / "minimize.json", summary), end="")
    if trace.status == "converged":
        return EXIT_OK if trace.inequalities_hold else EXIT_NUMERIC
    return EXIT_INCONCLUSIVE


def cmd_loops(args) -> int:
    M = get_manifold(args.manifold)
    if M.dim != 2:
        raise UsageError("loop search needs a surface")
    if args.height is not None:
        if args.manifold != "paraboloid":
            raise UsageError("--height applies to the paraboloid")
        if args.height < 0:
            raise UsageError("--height must be nonnegative")
        p = np.array([math.sqrt(args.height), 0.0])
    else:
        p = _vector(args.point, 2, "point")
        p = _default_point(M) if p is None else p
    if args.directions < 8:
        raise UsageError("--directions must be at least 8")
    result = loop_search(M, p, n_directions=args.directions, max_length=args.max_length,
                         closure_tol=args.closure_tol, h=args.step)
    summary = {"command": "loops", "config": _resolved(args), "seed": args.seed, "result": result.to_dict()}
    print(_write_json(_outdir(args) / "loops.json", summary), end="")
    return EXIT_INCONCLUSIVE if result.verdict == "inconclusive" else EXIT_OK


def cmd_beta(args) -> int:
    mu = solve_mu1(args.tol)
    summary = {
        "command": "beta",
        "config": _resolved(args),
        "seed": args.seed,
        "mu1": mu,
        "beta": beta(args.tol),
        "residual": abs(_mu_equation(mu)),
    }
    print(_write_json(_outdir(args) / "beta.json", summary), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifold", choices=sorted(MANIFOLDS), default="paraboloid")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1)

    parser = argparse.ArgumentParser(prog="convexgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geodesic", parents=[common], help="integrate one geodesic")
    p.add_argument("--point", type=float, nargs="+")
    p.add_argument("--vector", type=float, nargs="+")
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.set_defaults(handler=cmd_geodesic)

    p = sub.add_parser("curvature", parents=[common], help="analytic vs finite-difference curvature grid")
    p.add_argument("--n", type=int, default=5, help="grid points per axis")
    p.add_argument("--box", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(handler=cmd_curvature)

    p = sub.add_parser("certify", parents=[common], help="convexity verdict along sampled geodesics")
    p.add_argument("--function", choices=sorted(FUNCTIONS), required=True)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--n-geodesics", type=int, default=64)
    p.add_argument("--span", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--box", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("recur", parents=[common], help="first-return experiment on the unit tangent bundle")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--check-dt", type=float, default=0.01)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.set_defaults(handler=cmd_recur)

    p = sub.add_parser("minimize", parents=[common], help="regularised minimisation from a JSON run descriptor")
    p.add_argument("--config", required=True, help="run descriptor (JSON)")
    p.set_defaults(handler=cmd_minimize)

    p = sub.add_parser("loops", parents=[common], help="geodesic loops based at a point")
    p.add_argument("--point", type=float, nargs=2)
    p.add_argument("--height", type=float, help="paraboloid base point (sqrt(z), 0)")
    p.add_argument("--directions", type=int, default=360)
    p.add_argument("--max-length", type=float, default=50.0)
    p.add_argument("--closure-tol", type=float, default=1e-3)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.set_defaults(handler=cmd_loops)

    p = sub.add_parser("beta", parents=[common], help="mu1 and the soul-region bound")
    p.add_argument("--tol", type=float, default=1e-14)
    p.set_defaults(handler=cmd_beta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"{parser.prog} {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

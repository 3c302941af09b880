"""Regularised convex minimisation and the paraboloid soul-region bound.

For a convex ``u`` with minimum value 0 at ``p0`` and a strictly convex
exhaustion ``g >= 0``, the minimisers x_k of h_k = k u + g satisfy

    k u(x_k) + g(x_k) = h_k(x_k) <= h_k(p0) = g(p0),

so u(x_k) <= g(p0) / k and every x_k stays in the sublevel set
{g <= g(p0)}.  ``regularized_minimize`` runs this scheme numerically and
records both inequalities for every k.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .convexity import ConvexFunction, ConvexityReport, certify, gradient
from .errors import CertificationError, InapplicableError
from .geometry import DEFAULT_STEP, ChartManifold, exp_map, rk4_step, step_schedule
from .manifolds import height

Array = np.ndarray

DEFAULT_SCHEDULE = tuple(2**i for i in range(7))


# ---------------------------------------------------------------------------
# Inner solver


@dataclass
class DescentResult:
    x: Array
    converged: bool
    iterations: int
    grad_norm: float
    value: float
    history: list = field(default_factory=list, repr=False)


def gradient_descent(M: ChartManifold, f: ConvexFunction, x0, step: Optional[float] = None, tol: float = 1e-8,
                     max_iter: int = 500, alpha0: float = 1.0, shrink: float = 0.5,
                     armijo: float = 0.5) -> DescentResult:
    """x_{j+1} = exp_{x_j}(-alpha_j grad f(x_j)) until |grad f| < tol.

    ``step=None`` selects alpha_j by Armijo backtracking from ``alpha0``;
    a float fixes it.  The sufficient-decrease constant defaults to 1/2,
    which rules out the overshoot-and-oscillate pattern a tiny constant
    allows across a quadratic bottom.  On failure the best iterate seen is returned with
    ``converged=False``.
    """
    x = M.check_point(np.array(x0, dtype=float))
    fx = float(f(x))
    best = (fx, x)
    history = [x.copy()]
    gn = math.inf
    for j in range(max_iter):
        grad = gradient(M, f, x)
        gn = float(M.norm(x, grad))
        if gn < tol:
            return DescentResult(x, True, j, gn, fx, history)
        if step is not None:
            x = exp_map(M, x, -step * grad)
            fx = float(f(x))
        else:
            alpha = alpha0
            while True:
                y = exp_map(M, x, -alpha * grad)
                fy = float(f(y))
                if fy <= fx - armijo * alpha * gn * gn:
                    break
                alpha *= shrink
                if alpha < 1e-20:
                    return DescentResult(best[1], False, j, gn, best[0], history)
            x, fx = y, fy
        history.append(x.copy())
        if fx < best[0]:
            best = (fx, x)
    grad = gradient(M, f, x)
    gn = float(M.norm(x, grad))
    if gn < tol:
        return DescentResult(x, True, max_iter, gn, fx, history)
    return DescentResult(best[1], False, max_iter, gn, best[0], history)


# ---------------------------------------------------------------------------
# Regularised scheme


@dataclass
class KRecord:
    k: float
    x: Array
    u: float
    g: float
    h: float
    iterations: int
    converged: bool
    bound_ok: bool  # h_k(x_k) <= g(p0) + tol
    decay_ok: bool  # u(x_k) <= g(p0) / k + tol


@dataclass
class MinimizeTrace:
    schedule: tuple
    records: list
    p0: Array
    g_p0: float
    limit: Optional[Array]
    status: str  # converged | partial | non-stabilizing
    reports: dict = field(default_factory=dict)

    @property
    def inequalities_hold(self) -> bool:
        return all(r.bound_ok and r.decay_ok for r in self.records)

    def to_csv(self, path) -> None:
        n = len(self.p0)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k"] + [f"x_{i + 1}" for i in range(n)] + ["u", "g", "h_k", "iterations"])
            for r in self.records:
                writer.writerow([repr(float(r.k))] + [repr(float(c)) for c in r.x]
                                + [repr(r.u), repr(r.g), repr(r.h), str(r.iterations)])

    def summary(self) -> dict:
        return {
            "status": self.status,
            "schedule": list(self.schedule),
            "p0": [float(c) for c in self.p0],
            "g_p0": self.g_p0,
            "limit": None if self.limit is None else [float(c) for c in self.limit],
            "inequalities_hold": self.inequalities_hold,
            "records": [
                {"k": r.k, "x": [float(c) for c in r.x], "u": r.u, "g": r.g, "h_k": r.h,
                 "iterations": r.iterations, "bound_ok": r.bound_ok, "decay_ok": r.decay_ok}
                for r in self.records
            ],
            "certification": {k: v.to_dict() for k, v in self.reports.items()},
        }


def _combine(u: ConvexFunction, g: ConvexFunction, k: float, M: ChartManifold) -> ConvexFunction:
    return ConvexFunction(
        evaluate=lambda x: k * u(x) + g(x),
        gradient=lambda x: k * gradient(M, u, x) + gradient(M, g, x),
        name=f"{k:g}*{u.name}+{g.name}",
    )


def require_certified(u: ConvexFunction, g: ConvexFunction, M: ChartManifold, box=None,
                      **certify_kwargs) -> dict:
    """Certify g strictly convex and u not non-convex, or raise with the witness."""
    rep_g = certify(g, M, box=box, **certify_kwargs)
    if rep_g.verdict != "strictly-convex":
        raise CertificationError(
            f"exhaustion {g.name!r} failed strict convexity ({rep_g.verdict}, margin {rep_g.margin:.3g}, "
            f"witness {rep_g.witness})", rep_g)
    rep_u = certify(u, M, box=box, **certify_kwargs)
    if rep_u.verdict == "non-convex":
        raise CertificationError(
            f"objective {u.name!r} is non-convex (margin {rep_u.margin:.3g}, witness {rep_u.witness})", rep_u)
    return {"g": rep_g, "u": rep_u}


def regularized_minimize(M: ChartManifold, u: ConvexFunction, g: ConvexFunction, p0,
                         schedule: Sequence[float] = DEFAULT_SCHEDULE, x0=None, tol: float = 1e-8,
                         stab_tol: float = 1e-6, check_tol: float = 1e-8, max_iter: int = 500,
                         certify_box=None, reports: Optional[dict[str, ConvexityReport]] = None,
                         **certify_kwargs) -> MinimizeTrace:
    """Minimise h_k = k u + g along ``schedule`` with warm starts.

    ``u`` is shifted so that u(p0) = 0; ``p0`` must be a minimiser of u.
    Both functions are certified first unless ``reports`` are supplied.
    The limit is the last iterate once successive iterates agree to
    ``stab_tol``; otherwise the trace is flagged ``non-stabilizing``.
    """
    if reports is None:
        reports = require_certified(u, g, M, box=certify_box, **certify_kwargs)
    p0 = M.check_point(np.array(p0, dtype=float))
    u_p0 = float(u(p0))
    shifted = ConvexFunction(lambda x: u(x) - u_p0, u.gradient, u.hessian, u.manifold, u.name)
    g_p0 = float(g(p0))
    x = p0.copy() if x0 is None else M.check_point(np.array(x0, dtype=float))
    records = []
    status = "converged"
    for k in schedule:
        res = gradient_descent(M, _combine(shifted, g, k, M), x, tol=tol, max_iter=max_iter)
        x = res.x
        uk, gk = float(shifted(x)), float(g(x))
        hk = k * uk + gk
        records.append(KRecord(k, x.copy(), uk, gk, hk, res.iterations, res.converged,
                               bound_ok=hk <= g_p0 + check_tol, decay_ok=uk <= g_p0 / k + check_tol))
        if not res.converged:
            status = "partial"
            break
    limit = records[-1].x if records else None
    if status == "converged" and len(records) >= 2:
        if np.linalg.norm(M.displacement(records[-2].x, records[-1].x)) >= stab_tol:
            status = "non-stabilizing"
    return MinimizeTrace(tuple(schedule), records, p0, g_p0, limit, status, dict(reports))


# ---------------------------------------------------------------------------
# Soul-region bound on the paraboloid


def _mu_equation(m: float) -> float:
    return m - math.atan(m) - math.pi / 2.0


def solve_mu1(tol: float = 1e-14) -> float:
    """Positive root of mu - arctan(mu) = pi/2 by bisection on [2, 4]."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    lo, hi = 2.0, 4.0
    while True:
        mid = 0.5 * (lo + hi)
        fm = _mu_equation(mid)
        if abs(fm) < tol or hi - lo <= 4.0 * math.ulp(mid):
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid


def beta(tol: float = 1e-14) -> float:
    mu = solve_mu1(tol)
    return math.sqrt(0.75 * (1.0 + mu * mu))


def soul_region_check(trace: MinimizeTrace, slack: float = 1e-2) -> bool:
    """height(limit) <= beta + slack and height(x_k) < beta for every k."""
    if trace.status != "converged" or trace.limit is None:
        raise InapplicableError(f"trace status is {trace.status!r}; the bound applies to converged runs")
    b = beta()
    return bool(height(trace.limit) <= b + slack and all(height(r.x) < b for r in trace.records))


# ---------------------------------------------------------------------------
# Geodesic loops


@dataclass
class Loop:
    angle: float
    direction: list
    length: float
    closure_error: float


@dataclass
class LoopSearchResult:
    point: list
    n_directions: int
    max_length: float
    closure_tol: float
    loops: list
    verdict: str  # simple | non-simple | inconclusive
    exited: int = 0
    candidates: int = 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["loops"] = [loop.__dict__ for loop in self.loops]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _hermite(x0, v0, x1, v1, dt, s):
    s2, s3 = s * s, s * s * s
    pos = ((2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * dt * v0
           + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * dt * v1)
    vel = ((6 * s2 - 6 * s) * x0 + (3 * s2 - 4 * s + 1) * dt * v0
           + (-6 * s2 + 6 * s) * x1 + (3 * s2 - 2 * s) * dt * v1) / dt
    return pos, vel


def _closest_on_step(M, p, x0, v0, x1, v1, dt):
    """Signed closest approach to p over one step of cubic Hermite interpolation.

    The sign is that of the chart cross product v x (p - x) at the closest
    point, so it flips when the geodesic sweeps across p.
    """
    def dist(s):
        return float(np.linalg.norm(M.displacement(p, _hermite(x0, v0, x1, v1, dt, s)[0])))

    res = minimize_scalar(dist, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
    pos, vel = _hermite(x0, v0, x1, v1, dt, res.x)
    d = M.displacement(pos, p)
    side = 1.0 if vel[0] * d[1] - vel[1] * d[0] >= 0 else -1.0
    return side * res.fun, res.x


def _return_scan(M: ChartManifold, p: Array, v: Array, max_length: float, away: float, h: float):
    """Closest return to p of each geodesic after it first gets ``away`` from p.

    Returns ``(miss, time, exited)`` per direction, where ``miss`` is the
    signed closest-return distance (inf when the geodesic never turns back
    toward p).
    """
    B = v.shape[0]
    x = np.broadcast_to(p, v.shape).copy()
    n, hs = step_schedule(max_length, h)
    miss = np.full(B, np.inf)
    best_t = np.full(B, np.nan)
    left = np.zeros(B, dtype=bool)
    alive = np.ones(B, dtype=bool)
    prev = None  # state one step before ``old``
    prev_d = np.full(B, np.inf)
    d = np.zeros(B)
    for s in range(1, n + 1):
        old = (x, v, d)
        xn, vn = rk4_step(M, x, v, hs)
        ok = M.in_domain(xn) & np.all(np.isfinite(vn), axis=-1)
        alive &= ok
        x = np.where(alive[:, None], xn, x)
        v = np.where(alive[:, None], vn, v)
        d = np.linalg.norm(M.displacement(p, x), axis=-1)
        if prev is not None:
            # sampled distance has a local minimum at step s - 1
            cand = alive & left & (old[2] < prev_d) & (old[2] <= d) & (old[2] - hs < np.abs(miss))
            for b in np.flatnonzero(cand):
                for xa, va, xb, vb, t0 in ((prev[0][b], prev[1][b], old[0][b], old[1][b], (s - 2) * hs),
                                           (old[0][b], old[1][b], x[b], v[b], (s - 1) * hs)):
                    sd, frac = _closest_on_step(M, p, xa, va, xb, vb, hs)
                    if abs(sd) < abs(miss[b]):
                        miss[b], best_t[b] = sd, t0 + frac * hs
        left |= old[2] >= away
        prev_d = np.where(left, old[2], np.inf)
        prev = old
        if not alive.any():
            break
    return miss, best_t, ~alive


def _directions(M: ChartManifold, p: Array, angles: Array) -> Array:
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return M.normalize(np.broadcast_to(p, dirs.shape), dirs)


def loop_search(M: ChartManifold, p, n_directions: int = 360, max_length: float = 50.0,
                closure_tol: float = 1e-3, h: float = DEFAULT_STEP, angle_tol: float = 1e-11) -> LoopSearchResult:
    """Search for geodesic loops based at p on a surface.

    Unit-speed geodesics are shot in ``n_directions`` equally spaced chart
    angles.  Returns closer than ``10 * closure_tol`` in arclength are
    ignored.  Wherever the signed closest-return distance changes sign
    between neighbouring angles, the crossing is refined by bisection on
    the initial angle (all brackets at once) and kept as a loop if the
    refined closure error is below ``closure_tol``.
    """
    if M.dim != 2:
        raise ValueError("loop search is implemented for surfaces")
    if n_directions < 8:
        raise ValueError("n_directions must be at least 8")
    p = M.check_point(np.array(p, dtype=float))
    min_loop = 10.0 * closure_tol
    angles = 2.0 * np.pi * np.arange(n_directions) / n_directions
    miss, times, exited = _return_scan(M, p, _directions(M, p, angles), max_length, min_loop, h)

    nxt = (np.arange(n_directions) + 1) % n_directions
    lo_a = angles.copy()
    hi_a = angles + 2.0 * np.pi / n_directions
    bracket = np.isfinite(miss) & np.isfinite(miss[nxt]) & (np.sign(miss) != np.sign(miss[nxt]))
    lo_a, hi_a, lo_s = lo_a[bracket], hi_a[bracket], np.sign(miss[bracket])
    horizon = min(max_length, float(np.nanmax(times[bracket | bracket[np.arange(n_directions) - 1]],
                                              initial=0.0)) + 2.0)
    loops = []
    if len(lo_a):
        while np.max(hi_a - lo_a) > angle_tol:
            mid = 0.5 * (lo_a + hi_a)
            m, _, _ = _return_scan(M, p, _directions(M, p, mid), horizon, min_loop, h)
            same = np.sign(m) == lo_s
            lo_a = np.where(same, mid, lo_a)
            hi_a = np.where(same, hi_a, mid)
        mid = 0.5 * (lo_a + hi_a)
        m, t, _ = _return_scan(M, p, _directions(M, p, mid), horizon, min_loop, h)
        for alpha, err, length in zip(mid, np.abs(m), t):
            if err < closure_tol and length > min_loop:
                loops.append(Loop(float(alpha % (2.0 * np.pi)), _directions(M, p, np.array([alpha]))[0].tolist(),
                                  float(length), float(err)))

    n_exit = int(exited.sum())
    # sign changes that did not close are jumps between distinct return events
    near_miss = bool(np.any(np.abs(miss[np.isfinite(miss)]) < closure_tol)) and not loops
    if loops:
        verdict = "non-simple"
    elif near_miss or n_exit > 0.2 * n_directions:
        verdict = "inconclusive"
    else:
        verdict = "simple"
    return LoopSearchResult(p.tolist(), n_directions, max_length, closure_tol, loops, verdict,
                            n_exit, int(bracket.sum()))

"""Numerical convexity certification along sampled geodesics.

A smooth function is convex on a Riemannian manifold when (f o gamma)'' >= 0
for every geodesic gamma.  ``certify`` estimates the infimum of that second
derivative from central differences along unit-speed geodesics shot from a
quasi-random set of base points and directions.  The result is evidence,
not a proof.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .geometry import DEFAULT_STEP, ChartManifold, integrate_batch

Array = np.ndarray

CERTIFY_NOTE = "numerical certification along sampled geodesics; evidence, not proof"
GRADIENT_FD_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class ConvexFunction:
    """Scalar function on a chart.

    ``evaluate`` must broadcast over leading batch axes.  ``gradient``
    returns Riemannian gradient components in the chart basis and
    ``hessian(x, X, Y)`` the covariant Hessian as a bilinear form.
    """

    evaluate: Callable[[Array], Array]
    gradient: Optional[Callable[[Array], Array]] = None
    hessian: Optional[Callable[[Array, Array, Array], float]] = None
    manifold: Optional[str] = None
    name: str = "f"

    def __call__(self, x):
        return self.evaluate(x)


def fd_gradient(M: ChartManifold, f: ConvexFunction, x: Array, step: float = GRADIENT_FD_STEP) -> Array:
    """Riemannian gradient from central differences of f in the chart."""
    x = np.asarray(x, dtype=float)
    offsets = step * np.eye(M.dim)
    df = (f(x + offsets) - f(x - offsets)) / (2.0 * step)
    return np.linalg.solve(M.metric(x), df)


def gradient(M: ChartManifold, f: ConvexFunction, x: Array) -> Array:
    if f.gradient is not None:
        return np.asarray(f.gradient(x), dtype=float)
    return fd_gradient(M, f, x)


@dataclass
class ConvexityReport:
    verdict: str
    margin: float
    witness: Optional[dict]
    seed: int
    n_geodesics: int
    span: float
    spacing: float
    tol: float
    truncated: int
    function: str = "f"
    manifold: str = ""
    note: str = CERTIFY_NOTE

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def sample_points(box, n: int, seed: int) -> Array:
    box = np.asarray(box, dtype=float)
    unit = qmc.Halton(d=len(box), scramble=True, seed=seed).random(n)
    return box[:, 0] + unit * (box[:, 1] - box[:, 0])


def sample_directions(dim: int, n: int) -> Array:
    """Deterministic Euclidean unit directions: uniform angles in 2D and a
    Fibonacci lattice on the sphere in 3D.  In 2D only half-turn angles are
    used, since (f o gamma)'' is even in the initial velocity."""
    i = np.arange(n)
    if dim == 1:
        return np.ones((n, 1))
    if dim == 2:
        a = np.pi * i / n
        return np.stack([np.cos(a), np.sin(a)], axis=-1)
    if dim == 3:
        z = 1.0 - (2.0 * i + 1.0) / n
        r = np.sqrt(1.0 - z * z)
        phi = i * np.pi * (3.0 - math.sqrt(5.0))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    raise ValueError("directions are only sampled for dimensions 1 to 3")


def second_differences(f: ConvexFunction, M: ChartManifold, points: Array, directions: Array,
                       span: float, h: float = DEFAULT_STEP):
    """Central second differences of f along unit-speed geodesics.

    Geodesics start at ``points`` with metric-normalised ``directions`` and
    run over ``[-span, span]`` sampled every ``span / 64``.  Returns
    ``(params, positions, d2, truncated)`` where ``d2[b, j]`` belongs to
    ``params[j + 1]`` and is NaN wherever the geodesic had left the chart.
    """
    spacing = span / 64.0
    sub = max(1, math.ceil(spacing / h - 1e-9))
    v = M.normalize(points, directions)
    _, xf, _, ef = integrate_batch(M, points, v, span, spacing / sub, record_every=sub)
    _, xb, _, eb = integrate_batch(M, points, v, -span, spacing / sub, record_every=sub)
    n_rec = xf.shape[0]
    idx = np.arange(n_rec)
    valid_f = (ef[None, :] < 0) | (idx[:, None] <= ef[None, :])
    valid_b = (eb[None, :] < 0) | (idx[:, None] <= eb[None, :])
    pos = np.concatenate([xb[::-1], xf[1:]], axis=0)  # (2 n_rec - 1, B, dim)
    valid = np.concatenate([valid_b[::-1], valid_f[1:]], axis=0)
    vals = np.where(valid, f(pos), np.nan)
    d2 = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / spacing**2
    params = spacing * np.arange(-(n_rec - 1), n_rec)
    truncated = int(np.sum((ef >= 0) | (eb >= 0)))
    return params, np.moveaxis(pos, 0, 1), d2.T, truncated


def _chunk_min(f, M, points, directions, span, offset):
    params, pos, d2, truncated = second_differences(f, M, points, directions, span)
    if np.all(np.isnan(d2)):
        return math.inf, None, truncated
    flat = np.where(np.isnan(d2), np.inf, d2)
    b, j = np.unravel_index(np.argmin(flat), flat.shape)  # first occurrence breaks ties
    witness = {
        "sample": int(b + offset),
        "point": points[b].tolist(),
        "direction": directions[b].tolist(),
        "parameter": float(params[j + 1]),
        "second_difference": float(d2[b, j]),
    }
    return float(d2[b, j]), witness, truncated


def classify(margin: float, tol: float) -> str:
    if margin > tol:
        return "strictly-convex"
    if margin >= -tol:
        return "convex"
    return "non-convex"


def certify(f: ConvexFunction, M: ChartManifold, box=None, n_geodesics: int = 64, span: float = 1.0,
            tol: float = 1e-7, seed: int = 0, workers: int = 1) -> ConvexityReport:
    """Classify f as strictly-convex, convex, non-convex or inconclusive.

    The margin is the smallest central second difference observed (per
    unit parameter squared).  More than 20% of geodesics leaving the chart
    makes the verdict inconclusive.
    """
    if n_geodesics < 1:
        raise ValueError("n_geodesics must be at least 1")
    if not span > 0:
        raise ValueError("span must be positive")
    box = M.sample_box if box is None else box
    points = sample_points(box, n_geodesics, seed)
    directions = sample_directions(M.dim, n_geodesics)

    chunks = np.array_split(np.arange(n_geodesics), max(1, min(workers, n_geodesics)))
    jobs = [(points[c], directions[c], int(c[0])) for c in chunks if len(c)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda a: _chunk_min(f, M, a[0], a[1], span, a[2]), jobs))
    else:
        results = [_chunk_min(f, M, p, d, span, o) for p, d, o in jobs]

    margin, witness, truncated = math.inf, None, 0
    for m, w, t in results:  # chunks arrive in sample order
        truncated += t
        if m < margin:
            margin, witness = m, w
    if truncated:
        warnings.warn(f"{truncated} of {n_geodesics} geodesics left the chart and were truncated")
    if witness is None or truncated > 0.2 * n_geodesics:
        verdict = "inconclusive"
    else:
        verdict = classify(margin, tol)
    return ConvexityReport(
        verdict=verdict, margin=float(margin), witness=witness, seed=seed, n_geodesics=n_geodesics,
        span=span, spacing=span / 64.0, tol=tol, truncated=truncated, function=f.name, manifold=M.name,
    )


@dataclass
class ProbeResult:
    constant: bool
    oscillation: float
    applicable: bool
    recurrent_fraction: float
    note: str = field(default="")


def constancy_probe(f: ConvexFunction, M: ChartManifold, n_geodesics: int = 32, span: float = 20.0,
                    tol: float = 1e-6, seed: int = 0, recurrence=None) -> ProbeResult:
    """Measure how much f varies along sampled geodesics.

    On a manifold with recurrent geodesic flow a convex function must be
    constant along geodesics, so any oscillation above ``tol`` rules out
    convexity.  The probe is only meaningful when the flow looks recurrent;
    ``recurrence`` may carry precomputed :class:`RecurrenceStats`, otherwise
    a default experiment is run.  Non-recurrent manifolds are flagged
    ``applicable=False`` rather than failed.
    """
    if recurrence is None:
        from .flow import recurrence_experiment

        recurrence = recurrence_experiment(M, n_samples=n_geodesics, seed=seed)
    fraction = recurrence.fraction
    applicable = fraction >= 0.95
    points = sample_points(M.sample_box, n_geodesics, seed)
    v = M.normalize(points, sample_directions(M.dim, n_geodesics))
    _, xs, _, exits = integrate_batch(M, points, v, span, DEFAULT_STEP)
    vals = f(xs)
    idx = np.arange(xs.shape[0])[:, None]
    valid = (exits[None, :] < 0) | (idx <= exits[None, :])
    hi = np.max(np.where(valid, vals, -np.inf), axis=0)
    lo = np.min(np.where(valid, vals, np.inf), axis=0)
    osc = float(np.max(hi - lo))
    note = ("flow consistent with conservative; probe applicable" if applicable
            else "flow not recurrent at this scale; probe inapplicable")
    return ProbeResult(constant=osc <= tol, oscillation=osc, applicable=applicable,
                       recurrent_fraction=fraction, note=note)

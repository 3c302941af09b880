"""Warped products I x_g P over an interval base.

The assembled metric is dt^2 + g(t)^2 * (fiber metric).  The field
V = g(t) d_t is closed conformal with factor phi = g'(t), which makes
f = |V|^2 / 2 = g(t)^2 / 2 convex whenever g g'' >= 0.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convexity import ConvexFunction
from .errors import ChartExitError, GeometryError
from .geometry import (
    DEFAULT_STEP,
    ChartManifold,
    PhasePoint,
    geodesic_integrate,
    integrate_batch,
    sectional_curvature,
)
from .manifolds import paraboloid

Array = np.ndarray
Warp = tuple[Callable, Callable, Callable]

WARPS: dict[str, Warp] = {
    "exp": (np.exp, np.exp, np.exp),
    "cosh": (np.cosh, np.sinh, np.cosh),
    "one": (np.ones_like, np.zeros_like, np.zeros_like),
}


@dataclass(frozen=True, eq=False)
class WarpedProduct:
    interval: tuple[float, float]
    warp: Callable[[Array], Array]
    dwarp: Callable[[Array], Array]
    ddwarp: Callable[[Array], Array]
    fiber: ChartManifold
    manifold: ChartManifold
    name: str = "warped"

    # closed conformal structure, all as chart components
    def V(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = self.warp(x[..., 0])
        return out

    def phi(self, x: Array) -> Array:
        return self.dwarp(np.asarray(x, dtype=float)[..., 0])

    def grad_phi(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = self.ddwarp(x[..., 0])
        return out


def resolve_warp(warp) -> Warp:
    if isinstance(warp, str):
        try:
            return WARPS[warp]
        except KeyError:
            raise KeyError(f"unknown warp {warp!r}; choose from {sorted(WARPS)}") from None
    g, dg, ddg = warp
    return g, dg, ddg


def assemble(interval, warp, fiber: ChartManifold, name: str = "warped") -> WarpedProduct:
    """Build ``interval x_g fiber`` with its analytic Levi-Civita connection.

    ``warp`` is a key of :data:`WARPS` or a triple (g, g', g'').  Raises
    :class:`GeometryError` if g is not positive on a sample of the interval.
    """
    g, dg, ddg = resolve_warp(warp)
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    ts = np.linspace(max(lo, -20.0), min(hi, 20.0), 203)[1:-1]
    if np.any(~(np.asarray(g(ts), dtype=float) > 0)):
        raise GeometryError("warping function must be positive on the base interval")
    m = fiber.dim
    n = m + 1

    def metric(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (n, n))
        out[..., 0, 0] = 1.0
        out[..., 1:, 1:] = (g(x[..., 0]) ** 2)[..., None, None] * fiber.metric(x[..., 1:])
        return out

    def christoffel(x):
        x = np.asarray(x, dtype=float)
        t = x[..., 0]
        gt, dgt = g(t), dg(t)
        out = np.zeros(x.shape[:-1] + (n, n, n))
        out[..., 0, 1:, 1:] = (-gt * dgt)[..., None, None] * fiber.metric(x[..., 1:])
        ratio = (dgt / gt)[..., None, None] * np.eye(m)
        out[..., 1:, 0, 1:] = ratio
        out[..., 1:, 1:, 0] = ratio
        out[..., 1:, 1:, 1:] = fiber.gamma(x[..., 1:])
        return out

    fiber_box = tuple(fiber.sample_box)
    total = ChartManifold(
        dim=n,
        metric=metric,
        christoffel_fn=christoffel,
        periods=(None,) + tuple(fiber.periods or (None,) * m),
        lower=(lo,) + tuple(fiber.lower or (-np.inf,) * m),
        upper=(hi,) + tuple(fiber.upper or (np.inf,) * m),
        name=name,
        coords=("t",) + tuple(fiber.coords),
        sample_box=((max(lo, -1.0), min(hi, 1.0)),) + fiber_box,
    )
    return WarpedProduct((lo, hi), g, dg, ddg, fiber, total, name)


def m3() -> WarpedProduct:
    """R x_{e^t} P^2 with P the paraboloid z = x^2 + y^2."""
    return assemble((-np.inf, np.inf), "exp", paraboloid(), name="m3")


def m3_vertical_curvature(t, x, y):
    """Closed-form vertical sectional curvature of :func:`m3`."""
    return np.exp(-2.0 * np.asarray(t)) * (4.0 / (1.0 + 4.0 * x**2 + 4.0 * y**2) ** 2 - np.exp(2.0 * np.asarray(t)))


def _vertical_pair(W: WarpedProduct, point, u, w):
    m = W.fiber.dim
    vecs = []
    for vec in (u, w):
        vec = np.asarray(vec, dtype=float)
        if vec.shape[-1] == m:
            vec = np.concatenate([[0.0], vec])
        elif vec.shape[-1] != m + 1:
            raise ValueError("vectors must have fiber or total dimension")
        if abs(vec[0]) > 1e-12 * max(1.0, np.linalg.norm(vec)):
            raise GeometryError("vertical curvature needs vectors tangent to the fiber")
        vec[0] = 0.0
        vecs.append(vec)
    M = W.manifold
    e1 = vecs[0] / M.norm(point, vecs[0])
    e2 = vecs[1] - M.inner(point, vecs[1], e1) * e1
    n2 = M.norm(point, e2)
    if not n2 > 1e-12 * M.norm(point, vecs[1]):
        raise GeometryError("vertical vectors are linearly dependent")
    e2 = e2 / n2
    gram = np.array([[M.inner(point, a, b) for b in (e1, e2)] for a in (e1, e2)])
    assert np.abs(gram - np.eye(2)).max() <= 1e-12
    return e1, e2


def vertical_curvature(W: WarpedProduct, point, u, w, fiber_method: str = "auto") -> float:
    """Sectional curvature of a vertical plane: (K^P - g'(t)^2) / g(t)^2.

    ``u`` and ``w`` may be given as fiber-chart vectors or as total-space
    vectors with zero base component; they are orthonormalised internally.
    On an interval base with the flat metric |grad g| is |g'|.
    """
    point = np.asarray(point, dtype=float)
    e1, e2 = _vertical_pair(W, point, u, w)
    t = point[0]
    kp = sectional_curvature(W.fiber, point[1:], e1[1:], e2[1:], method=fiber_method)
    return float((kp - W.dwarp(t) ** 2) / W.warp(t) ** 2)


def energy(W: WarpedProduct) -> ConvexFunction:
    """f = <V, V> / 2 = g(t)^2 / 2 with gradient phi V and its Hessian."""
    g, dg, ddg = W.warp, W.dwarp, W.ddwarp
    M = W.manifold

    def evaluate(x):
        return 0.5 * g(np.asarray(x, dtype=float)[..., 0]) ** 2

    def grad(x):
        return W.phi(x)[..., None] * W.V(x)

    def hess(x, X, Y):
        x = np.asarray(x, dtype=float)
        t = x[..., 0]
        # <X, grad phi><V, Y> + phi^2 <X, Y>
        return ddg(t) * X[..., 0] * g(t) * Y[..., 0] + dg(t) ** 2 * M.inner(x, X, Y)

    return ConvexFunction(evaluate, grad, hess, manifold=W.name, name=f"{W.name}-energy")


def conformal_residual(W: WarpedProduct, x) -> Array:
    """Componentwise |V|^2 grad(phi) - <V, grad(phi)> V; zero for a closed conformal V."""
    M = W.manifold
    V, gp = W.V(x), W.grad_phi(x)
    return M.inner(x, V, V)[..., None] * gp - M.inner(x, V, gp)[..., None] * V


def hessian_identity_check(W: WarpedProduct, point, X, spacing: float = 1e-3) -> float:
    """|(f o gamma_X)''(0) - Hess f(X, X)| with the left side by central differences.

    The geodesic through (point, X) is integrated a distance ``spacing``
    in both directions.
    """
    f = energy(W)
    point = np.asarray(point, dtype=float)
    X = np.asarray(X, dtype=float)
    theta = PhasePoint(point, X)
    fwd = geodesic_integrate(W.manifold, theta, spacing, spacing / 2).points[-1]
    bwd = geodesic_integrate(W.manifold, theta, -spacing, spacing / 2).points[-1]
    fd = (f(fwd) - 2.0 * f(point) + f(bwd)) / spacing**2
    return float(abs(fd - f.hessian(point, X, X)))


def kinetic_energy_witness(M: ChartManifold, theta0: PhasePoint, T: float, h: float = DEFAULT_STEP) -> float:
    """Max drift of E = <gamma', gamma'> along the geodesic through theta0.

    E is constant along the tangent lift of a geodesic, which is why the
    kinetic energy on TM is convex but never strictly convex.  ``theta0``
    may hold a batch of initial states; the worst drift is returned.
    """
    M.check_point(theta0.point)
    times, xs, vs, exits = integrate_batch(M, theta0.point, theta0.vector, T, h)
    if np.any(exits >= 0):
        raise ChartExitError(float(times[np.min(exits[exits >= 0])]))
    E = M.inner(xs, vs, vs)
    return float(np.max(np.abs(E - E[0])))


def curvature_grid(M: ChartManifold, points, analytic: Callable[[Array], float], plane=None) -> list[dict]:
    """Rows of analytic versus metric-only finite-difference curvature.

    ``plane(x)`` returns the spanning pair at x; it defaults to the last two
    coordinate directions.
    """
    rows = []
    n = M.dim
    for x in np.asarray(points, dtype=float):
        if plane is None:
            u, w = np.eye(n)[-2], np.eye(n)[-1]
        else:
            u, w = plane(x)
        ka = float(analytic(x))
        kf = sectional_curvature(M, x, u, w, method="metric")
        row = {c: float(v) for c, v in zip(M.coords, x)}
        row.update(K_analytic=ka, K_fd=kf, abs_err=abs(ka - kf))
        rows.append(row)
    return rows


def write_grid_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) for k, v in row.items()})


def plane_curvature_scan(W: WarpedProduct, n: int = 50, seed: int = 0, box=None) -> dict:
    """Sectional curvatures of random (generally non-vertical) planes.

    Reported only: nothing here asserts a lower bound for non-vertical planes.
    """
    rng = np.random.default_rng(seed)
    M = W.manifold
    box = np.asarray(M.sample_box if box is None else box, dtype=float)
    values = []
    for _ in range(n):
        x = box[:, 0] + rng.random(M.dim) * (box[:, 1] - box[:, 0])
        u, w = rng.standard_normal((2, M.dim))
        values.append(sectional_curvature(M, x, u, w, method="fd"))
    values = np.array(values)
    return {"n": n, "seed": seed, "min": float(values.min()), "max": float(values.max())}


def conformal_hypothesis(W: WarpedProduct, t) -> Array:
    """<V, grad phi> = g g''; nonnegative values give convexity of the energy."""
    t = np.asarray(t, dtype=float)
    return W.warp(t) * W.ddwarp(t)

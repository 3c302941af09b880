"""Chart-based Riemannian manifolds.

Every manifold lives in a single global chart.  Metric callables must
broadcast over leading batch axes: ``metric(x)`` with ``x.shape == (..., n)``
returns an array of shape ``(..., n, n)``.  The same holds for analytic
Christoffel callables, which return ``(..., n, n, n)`` indexed ``[k, i, j]``
for the symbol with upper index ``k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ChartExitError,
    DegenerateMetricError,
    DegeneratePlaneError,
    DomainError,
    StepUnderflowError,
)

METRIC_FD_STEP = 1e-4
CHRISTOFFEL_FD_STEP = 1e-3
DEFAULT_STEP = 0.01

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class ChartManifold:
    dim: int
    metric: Callable[[Array], Array]
    christoffel_fn: Optional[Callable[[Array], Array]] = None
    periods: Optional[Sequence[Optional[float]]] = None
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    # closed-form -G(x)(v, v), used by the integrators when present
    acceleration_fn: Optional[Callable[[Array, Array], Array]] = None
    # analytic sectional curvature override, (x, u, w) -> K
    curvature_fn: Optional[Callable[[Array, Array, Array], float]] = None
    name: str = "chart"
    coords: Optional[Sequence[str]] = None
    sample_box: Optional[Sequence[tuple[float, float]]] = None
    _period_arr: Array = field(init=False, repr=False)
    _lower_arr: Array = field(init=False, repr=False)
    _upper_arr: Array = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        periods = self.periods if self.periods is not None else [None] * self.dim
        lower = self.lower if self.lower is not None else [-np.inf] * self.dim
        upper = self.upper if self.upper is not None else [np.inf] * self.dim
        for seq, label in ((periods, "periods"), (lower, "lower"), (upper, "upper")):
            if len(seq) != self.dim:
                raise ValueError(f"{label} must have length {self.dim}")
        per = np.array([np.nan if p is None else float(p) for p in periods])
        lo = np.array(lower, dtype=float)
        hi = np.array(upper, dtype=float)
        periodic = ~np.isnan(per)
        lo[periodic], hi[periodic] = -np.inf, np.inf
        object.__setattr__(self, "_period_arr", per)
        object.__setattr__(self, "_lower_arr", lo)
        object.__setattr__(self, "_upper_arr", hi)
        if self.coords is None:
            object.__setattr__(self, "coords", tuple(f"x_{i + 1}" for i in range(self.dim)))
        if self.sample_box is None:
            box = []
            for i in range(self.dim):
                if periodic[i]:
                    box.append((0.0, float(per[i])))
                else:
                    box.append((max(lo[i], -1.0), min(hi[i], 1.0)))
            object.__setattr__(self, "sample_box", tuple(box))

    @property
    def periodic(self) -> Array:
        return ~np.isnan(self._period_arr)

    @property
    def bounded(self) -> bool:
        return bool(np.isfinite(self._lower_arr).any() or np.isfinite(self._upper_arr).any())

    def wrap(self, x: Array) -> Array:
        mask = self.periodic
        if not mask.any():
            return x
        x = np.array(x, dtype=float, copy=True)
        x[..., mask] = np.mod(x[..., mask], self._period_arr[mask])
        return x

    def displacement(self, a: Array, b: Array) -> Array:
        """Coordinate difference ``b - a`` using the minimum image on periodic axes."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        mask = self.periodic
        if mask.any():
            per = self._period_arr[mask]
            d[..., mask] -= per * np.round(d[..., mask] / per)
        return d

    def in_domain(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        if self.bounded:
            ok &= np.all((x > self._lower_arr) & (x < self._upper_arr), axis=-1)
        return ok

    def gamma(self, x: Array) -> Array:
        """Christoffel symbols without validation (hot path of the integrators)."""
        if self.christoffel_fn is not None:
            return self.christoffel_fn(x)
        return christoffel_fd(self.metric, x)

    def inner(self, x: Array, u: Array, w: Array) -> Array:
        return np.einsum("...i,...ij,...j->...", u, self.metric(x), w)

    def norm(self, x: Array, u: Array) -> Array:
        return np.sqrt(self.inner(x, u, u))

    def normalize(self, x: Array, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        n = self.norm(x, u)
        if np.any(n == 0):
            raise ValueError("cannot normalise a zero vector")
        return u / np.asarray(n)[..., None]

    def check_point(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected {self.dim} coordinates, got shape {x.shape}")
        if not np.all(self.in_domain(x)):
            raise DomainError(f"point {x} outside the chart of {self.name}")
        g = self.metric(x)
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise DegenerateMetricError(f"metric not positive definite at {x}") from exc
        return x


@dataclass(frozen=True, eq=False)
class PhasePoint:
    point: Array
    vector: Array

    def __post_init__(self):
        p = np.array(self.point, dtype=float)
        v = np.array(self.vector, dtype=float)
        if p.shape != v.shape:
            raise ValueError("point and vector must have the same shape")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "vector", v)

    def as_array(self) -> Array:
        return np.concatenate([self.point, self.vector], axis=-1)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    times: Array
    points: Array
    vectors: Array
    speeds: Array
    step: float

    def __len__(self):
        return len(self.times)

    @property
    def endpoint(self) -> PhasePoint:
        return PhasePoint(self.points[-1], self.vectors[-1])

    def state(self, i: int) -> PhasePoint:
        return PhasePoint(self.points[i], self.vectors[i])

    @property
    def states(self) -> list[PhasePoint]:
        return [self.state(i) for i in range(len(self))]

    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.speeds - self.speeds[0])))

    def to_csv(self, path) -> None:
        n = self.points.shape[-1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)] + ["speed"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for t, x, v, s in zip(self.times, self.points, self.vectors, self.speeds):
                writer.writerow([repr(float(t))] + [repr(float(c)) for c in x]
                                + [repr(float(c)) for c in v] + [repr(float(s))])


# ---------------------------------------------------------------------------
# Differential quantities


def christoffel_fd(metric: Callable[[Array], Array], x: Array, step: float = METRIC_FD_STEP) -> Array:
    """Levi-Civita symbols from central differences of the metric."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    offsets = step * np.eye(n)
    gp = metric(x[..., None, :] + offsets)
    gm = metric(x[..., None, :] - offsets)
    dg = (gp - gm) / (2.0 * step)  # dg[..., l, i, j] = d_l g_ij
    ginv = np.linalg.inv(metric(x))
    # [i, j, l] -> d_i g_jl + d_j g_il - d_l g_ij
    lowered = dg + np.swapaxes(dg, -3, -2) - np.moveaxis(dg, -3, -1)
    gam = 0.5 * np.einsum("...kl,...ijl->...kij", ginv, lowered)
    return 0.5 * (gam + np.swapaxes(gam, -1, -2))


def christoffel(M: ChartManifold, x: Array, method: str = "auto") -> Array:
    """Christoffel symbols ``G[k, i, j]`` at a chart point.

    ``method`` is ``"auto"`` (analytic when available), ``"analytic"`` or
    ``"fd"``.  Raises :class:`DomainError` outside the chart and
    :class:`DegenerateMetricError` when the metric is not positive definite.
    """
    x = M.check_point(x)
    if method == "fd" or (method == "auto" and M.christoffel_fn is None):
        return christoffel_fd(M.metric, x)
    if method in ("auto", "analytic"):
        if M.christoffel_fn is None:
            raise ValueError(f"{M.name} has no analytic Christoffel symbols")
        return np.asarray(M.christoffel_fn(x), dtype=float)
    raise ValueError(f"unknown method {method!r}")


def riemann_fd(M: ChartManifold, x: Array, step: float = CHRISTOFFEL_FD_STEP,
               analytic: bool = True) -> Array:
    """Riemann tensor ``R[l, i, j, k]`` with ``R(d_i, d_j) d_k = R[l, i, j, k] d_l``.

    Christoffel derivatives use the five-point central stencil with spacing
    ``step`` (fourth order, so curvature near zero keeps a small relative
    error).  With ``analytic=False`` the symbols themselves come from differences of
    the metric, so the result depends on nothing but ``M.metric``.
    """
    x = M.check_point(x)
    n = M.dim
    gam_of = M.gamma if analytic else (lambda y: christoffel_fd(M.metric, y))
    offsets = step * np.eye(n)
    d_gam = (8.0 * (gam_of(x + offsets) - gam_of(x - offsets))
             - (gam_of(x + 2.0 * offsets) - gam_of(x - 2.0 * offsets))) / (12.0 * step)  # [m, k, i, j]
    gam = gam_of(x)
    R = (np.einsum("iljk->lijk", d_gam) - np.einsum("jlik->lijk", d_gam)
         + np.einsum("lim,mjk->lijk", gam, gam) - np.einsum("ljm,mik->lijk", gam, gam))
    return R


def sectional_curvature(M: ChartManifold, x: Array, u: Array, w: Array, method: str = "auto") -> float:
    """Sectional curvature of span(u, w) at x.

    ``method="auto"`` uses ``M.curvature_fn`` when present and the finite
    difference Riemann tensor otherwise; ``"fd"`` forces the tensor built
    from Christoffel symbols, ``"metric"`` forces a tensor built from the
    metric alone.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    g = M.metric(x)
    uu, ww, uw = u @ g @ u, w @ g @ w, u @ g @ w
    area = uu * ww - uw * uw
    if not area > 1e-14 * uu * ww or uu == 0 or ww == 0:
        raise DegeneratePlaneError("u and w do not span a plane")
    if method == "auto" and M.curvature_fn is not None:
        return float(M.curvature_fn(x, u, w))
    if method not in ("auto", "fd", "metric"):
        raise ValueError(f"unknown method {method!r}")
    R = riemann_fd(M, x, analytic=(method != "metric"))
    Ruww = np.einsum("lijk,i,j,k->l", R, u, w, w)
    return float(Ruww @ g @ u / area)


# ---------------------------------------------------------------------------
# Integration


def _acceleration(M: ChartManifold, x: Array, v: Array) -> Array:
    if M.acceleration_fn is not None:
        return M.acceleration_fn(x, v)
    return -np.einsum("...kij,...i,...j->...k", M.gamma(x), v, v)


def rk4_step(M: ChartManifold, x: Array, v: Array, h: float) -> tuple[Array, Array]:
    """One classical Runge-Kutta step of x'' + G(x)(x', x') = 0.

    Overflow in a step that leaves the chart is not reported here; callers
    detect the non-finite or out-of-domain result and treat it as an exit.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        a1 = _acceleration(M, x, v)
        v2 = v + 0.5 * h * a1
        a2 = _acceleration(M, x + 0.5 * h * v, v2)
        v3 = v + 0.5 * h * a2
        a3 = _acceleration(M, x + 0.5 * h * v2, v3)
        v4 = v + h * a3
        a4 = _acceleration(M, x + h * v3, v4)
        x_new = x + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v_new = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return M.wrap(x_new), v_new


def step_schedule(T: float, h: float) -> tuple[int, float]:
    """Number of steps and signed step length covering ``[0, T]`` exactly."""
    if not (h > 0 and math.isfinite(h)):
        raise ValueError("step must be positive and finite")
    if not math.isfinite(T):
        raise ValueError("duration must be finite")
    if h < 1e-12 * max(1.0, abs(T)):
        raise StepUnderflowError(f"step {h:g} underflows duration {T:g}")
    if T == 0:
        return 0, 0.0
    n = max(1, math.ceil(abs(T) / h - 1e-9))
    return n, T / n


def integrate_batch(M: ChartManifold, x0: Array, v0: Array, T: float, h: float = DEFAULT_STEP,
                    record_every: int = 1):
    """Integrate a batch of geodesics, freezing members that leave the chart.

    Returns ``(times, xs, vs, exit_index)`` where ``xs`` has shape
    ``(n_records, *batch, dim)`` and ``exit_index`` holds, per batch member,
    the index of its last recorded in-chart state or -1 when it never left.
    """
    x = M.wrap(np.array(x0, dtype=float))
    v = np.array(v0, dtype=float)
    n, hs = step_schedule(T, h)
    batch = x.shape[:-1]
    alive = np.ones(batch, dtype=bool)
    exit_step = np.full(batch, -1, dtype=int)
    xs, vs, ts = [x.copy()], [v.copy()], [0.0]
    check = M.bounded
    for s in range(1, n + 1):
        xn, vn = rk4_step(M, x, v, hs)
        ok = M.in_domain(xn) & np.all(np.isfinite(vn), axis=-1) if check else (
            np.all(np.isfinite(xn), axis=-1) & np.all(np.isfinite(vn), axis=-1))
        newly = alive & ~ok
        if newly.any():
            exit_step[newly] = s - 1
            alive &= ok
        x = np.where(alive[..., None], xn, x)
        v = np.where(alive[..., None], vn, v)
        if s % record_every == 0 or s == n:
            xs.append(x.copy())
            vs.append(v.copy())
            ts.append(s * hs)
        if not alive.any():
            break
    times = np.array(ts)
    # convert exit step to record index
    steps_rec = np.array([0] + [min(n, (i + 1) * record_every) for i in range(len(ts) - 1)])
    exit_index = np.where(exit_step >= 0,
                          np.searchsorted(steps_rec, exit_step, side="right") - 1, -1)
    return times, np.array(xs), np.array(vs), exit_index


def _make_path(M: ChartManifold, times, xs, vs, step) -> GeodesicPath:
    return GeodesicPath(times=times, points=xs, vectors=vs, speeds=M.norm(xs, vs), step=step)


def geodesic_integrate(M: ChartManifold, theta0: PhasePoint, T: float, h: float = DEFAULT_STEP) -> GeodesicPath:
    """Integrate the geodesic through ``theta0`` over parameter ``[0, T]``.

    Negative ``T`` integrates backward.  Steps are fixed and shortened
    uniformly so that the last state sits exactly at ``T``.  Raises
    :class:`ChartExitError` carrying the partial path when a bounded
    coordinate leaves the chart.
    """
    M.check_point(theta0.point)
    times, xs, vs, exit_index = integrate_batch(M, theta0.point, theta0.vector, T, h)
    _, hs = step_schedule(T, h)
    if exit_index >= 0:
        k = int(exit_index) + 1
        raise ChartExitError(float(times[k - 1]), _make_path(M, times[:k], xs[:k], vs[:k], hs))
    return _make_path(M, times, xs, vs, hs)


def exp_map(M: ChartManifold, p: Array, v: Array, h: float = DEFAULT_STEP) -> Array:
    """Endpoint at parameter 1 of the geodesic with initial velocity v.

    The parameter step is chosen so that each step covers at most ``h`` of
    arclength, which keeps short exponentials cheap.
    """
    p = M.check_point(p)
    v = np.asarray(v, dtype=float)
    speed = float(M.norm(p, v))
    if speed == 0.0:
        return p.copy()
    n = max(1, math.ceil(speed / h))
    return geodesic_integrate(M, PhasePoint(p, v), 1.0, 1.0 / n).points[-1]


def parallel_transport(M: ChartManifold, path: GeodesicPath, w0: Array, full: bool = False):
    """Transport ``w0`` along ``path`` by solving w' + G(x)(x', w) = 0.

    The geodesic is re-integrated jointly with ``w`` using the step recorded
    on the path, so the transported vector follows exactly the stored states.
    """
    x = np.array(path.points[0], dtype=float)
    v = np.array(path.vectors[0], dtype=float)
    w = np.array(w0, dtype=float)
    h = path.step
    out = [w.copy()]

    def rhs(x, v, w):
        gam = M.gamma(x)
        return (-np.einsum("kij,i,j->k", gam, v, v), -np.einsum("kij,i,j->k", gam, v, w))

    for _ in range(len(path) - 1):
        a1, b1 = rhs(x, v, w)
        x2, v2, w2 = x + 0.5 * h * v, v + 0.5 * h * a1, w + 0.5 * h * b1
        a2, b2 = rhs(x2, v2, w2)
        x3, v3, w3 = x + 0.5 * h * v2, v + 0.5 * h * a2, w + 0.5 * h * b2
        a3, b3 = rhs(x3, v3, w3)
        x4, v4, w4 = x + h * v3, v + h * a3, w + h * b3
        a4, b4 = rhs(x4, v4, w4)
        x = M.wrap(x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4))
        v = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        w = w + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        out.append(w.copy())
    return np.array(out) if full else w

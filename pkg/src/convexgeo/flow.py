"""Geodesic flow on the unit tangent bundle at desk scale.

Phase-space distance throughout is the Euclidean distance between
(point, vector) pairs in chart coordinates, with minimum-image wrapping on
periodic coordinates.  This is not the Sasaki distance; it is adequate for
the small neighbourhoods used by the recurrence experiment.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ChartExitError
from .geometry import DEFAULT_STEP, ChartManifold, PhasePoint, integrate_batch, rk4_step, step_schedule

Array = np.ndarray

DISTANCE_NOTE = "phase distance: chart-Euclidean on (point, vector), periodic wrap; not Sasaki"


def unit(M: ChartManifold, theta: PhasePoint) -> PhasePoint:
    return PhasePoint(theta.point, M.normalize(theta.point, theta.vector))


def flow(M: ChartManifold, theta: PhasePoint, t: float, h: float = DEFAULT_STEP) -> PhasePoint:
    """phi_t(theta) for the unit-normalised theta; negative t flows backward."""
    theta = unit(M, theta)
    if t == 0:
        return PhasePoint(M.wrap(theta.point), theta.vector)
    times, xs, vs, exit_index = integrate_batch(M, theta.point, theta.vector, t, h)
    if np.any(exit_index >= 0):
        raise ChartExitError(float(times[int(np.max(exit_index))]))
    return PhasePoint(xs[-1], vs[-1])


def flip(theta: PhasePoint) -> PhasePoint:
    return PhasePoint(theta.point, -theta.vector)


def phase_distance(M: ChartManifold, a: PhasePoint, b: PhasePoint) -> Array:
    dp = M.displacement(a.point, b.point)
    dv = b.vector - a.vector
    return np.sqrt(np.sum(dp * dp, axis=-1) + np.sum(dv * dv, axis=-1))


def sample_unit_tangents(M: ChartManifold, n: int, rng: np.random.Generator) -> PhasePoint:
    """Uniform base points in ``M.sample_box`` times uniform directions."""
    box = np.asarray(M.sample_box, dtype=float)
    points = box[:, 0] + rng.random((n, M.dim)) * (box[:, 1] - box[:, 0])
    if M.dim == 2:
        a = rng.uniform(0.0, 2.0 * np.pi, n)
        dirs = np.stack([np.cos(a), np.sin(a)], axis=-1)
    else:
        dirs = rng.standard_normal((n, M.dim))
    return PhasePoint(points, M.normalize(points, dirs))


@dataclass
class RecurrenceStats:
    manifold: str
    epsilon: float
    horizon: float
    t_min: float
    check_dt: float
    seed: int
    points: Array
    vectors: Array
    return_times: Array  # NaN where no return was seen

    @property
    def n_samples(self) -> int:
        return len(self.return_times)

    @property
    def returns(self) -> int:
        return int(np.sum(~np.isnan(self.return_times)))

    @property
    def fraction(self) -> float:
        return self.returns / self.n_samples

    @property
    def verdict(self) -> str:
        # a finite sample can support, never establish, (non-)conservativity
        if self.fraction >= 0.95:
            return "consistent with conservative"
        if self.fraction == 0:
            return "consistent with dissipative"
        return "mixed"

    def summary(self) -> dict:
        return {
            "manifold": self.manifold,
            "epsilon": self.epsilon,
            "horizon": self.horizon,
            "t_min": self.t_min,
            "check_dt": self.check_dt,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "returns": self.returns,
            "fraction": self.fraction,
            "verdict": self.verdict,
            "distance": DISTANCE_NOTE,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def to_csv(self, path) -> None:
        n = self.points.shape[-1]
        header = [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)] + ["return_time"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for x, v, t in zip(self.points, self.vectors, self.return_times):
                writer.writerow([repr(float(c)) for c in x] + [repr(float(c)) for c in v]
                                + ["" if math.isnan(t) else repr(float(t))])


def first_returns(M: ChartManifold, theta: PhasePoint, epsilon: float, T: float, check_dt: float,
                  t_min: float, h: float = DEFAULT_STEP) -> Array:
    """First check time in [t_min, T] at which each sample is within epsilon of its start."""
    x0, v0 = M.wrap(theta.point), theta.vector
    x, v = x0.copy(), v0.copy()
    n_steps, hs = step_schedule(T, h)
    stride = max(1, round(check_dt / hs))
    out = np.full(x.shape[0], np.nan)
    alive = np.ones(x.shape[0], dtype=bool)
    for s in range(1, n_steps + 1):
        xn, vn = rk4_step(M, x, v, hs)
        ok = M.in_domain(xn) & np.all(np.isfinite(vn), axis=-1)
        alive &= ok
        x = np.where(alive[:, None], xn, x)
        v = np.where(alive[:, None], vn, v)
        t = s * hs
        if s % stride == 0 and t >= t_min:
            pending = alive & np.isnan(out)
            if not pending.any():
                break
            d = phase_distance(M, PhasePoint(x0, v0), PhasePoint(x, v))
            out[pending & (d < epsilon)] = t
    return out


def recurrence_experiment(M: ChartManifold, n_samples: int = 200, epsilon: float = 0.05, T: float = 200.0,
                          check_dt: float = 0.01, seed: int = 0, h: float = DEFAULT_STEP,
                          workers: int = 1) -> RecurrenceStats:
    """Record first returns of sampled unit tangent vectors to their epsilon-ball.

    Returns closer in time than ``10 * epsilon`` are ignored so that plain
    continuity of the flow is not mistaken for recurrence.
    """
    if not epsilon > 0 or not T > 0:
        raise ValueError("epsilon and T must be positive")
    rng = np.random.default_rng(seed)
    theta = sample_unit_tangents(M, n_samples, rng)
    t_min = 10.0 * epsilon
    chunks = [c for c in np.array_split(np.arange(n_samples), max(1, workers)) if len(c)]

    def run(c):
        return first_returns(M, PhasePoint(theta.point[c], theta.vector[c]), epsilon, T, check_dt, t_min, h)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return RecurrenceStats(
        manifold=M.name, epsilon=epsilon, horizon=T, t_min=t_min, check_dt=check_dt, seed=seed,
        points=theta.point, vectors=theta.vector, return_times=np.concatenate(parts),
    )


def flip_conjugacy_check(M: ChartManifold, theta: PhasePoint, T_max: float = 5.0,
                         h: float = DEFAULT_STEP) -> float:
    """sup_t distance between flip(phi_t(flip theta)) and phi_{-t}(theta).

    ``theta`` may hold a batch of samples along the leading axis.  The
    backward flow is integrated with negative steps.  Samples leaving the
    chart are compared only up to their exit.
    """
    theta = unit(M, theta)
    _, xa, va, ea = integrate_batch(M, theta.point, -theta.vector, T_max, h)
    _, xb, vb, eb = integrate_batch(M, theta.point, theta.vector, -T_max, h)
    d = phase_distance(M, PhasePoint(xa, -va), PhasePoint(xb, vb))
    n = len(d)
    idx = np.arange(n).reshape((n,) + (1,) * (d.ndim - 1))
    last = np.minimum(np.where(ea < 0, n, ea), np.where(eb < 0, n, eb))
    if np.any(last < n):
        warnings.warn("flip conjugacy check truncated by chart exit")
    return float(np.max(np.where(idx <= last, d, 0.0)))

"""Built-in manifolds, addressable by string key."""
from __future__ import annotations

import numpy as np

from .geometry import ChartManifold


def _flat_metric(n):
    eye = np.eye(n)

    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

    return metric


def _zero_christoffel(n):
    def gam(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (n, n, n))

    return gam


def _zero_acceleration(x, v):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(v)))


def plane(dim: int = 2) -> ChartManifold:
    return ChartManifold(
        dim=dim,
        metric=_flat_metric(dim),
        christoffel_fn=_zero_christoffel(dim),
        acceleration_fn=_zero_acceleration,
        curvature_fn=lambda x, u, w: 0.0,
        name="plane",
        coords=("x", "y", "z")[:dim] if dim <= 3 else None,
        sample_box=tuple((0.0, 1.0) for _ in range(dim)),
    )


def flat_torus(periods=(1.0, 1.0)) -> ChartManifold:
    n = len(periods)
    return ChartManifold(
        dim=n,
        metric=_flat_metric(n),
        christoffel_fn=_zero_christoffel(n),
        acceleration_fn=_zero_acceleration,
        periods=tuple(periods),
        curvature_fn=lambda x, u, w: 0.0,
        name="torus",
        coords=("x", "y", "z")[:n] if n <= 3 else None,
    )


# Paraboloid z = x^2 + y^2 in its Monge chart (x, y).

def paraboloid_metric(x):
    x = np.asarray(x, dtype=float)
    return np.eye(2) + 4.0 * x[..., :, None] * x[..., None, :]


def paraboloid_christoffel(x):
    # G^k_ij = f_k f_ij / (1 + |grad f|^2) with f = x^2 + y^2
    x = np.asarray(x, dtype=float)
    denom = 1.0 + 4.0 * np.sum(x * x, axis=-1)
    return (4.0 * x / denom[..., None])[..., :, None, None] * np.eye(2)


def paraboloid_acceleration(x, v):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    scale = 4.0 * np.sum(v * v, axis=-1) / (1.0 + 4.0 * np.sum(x * x, axis=-1))
    return -scale[..., None] * x


def paraboloid_gaussian_curvature(x):
    x = np.asarray(x, dtype=float)
    return 4.0 / (1.0 + 4.0 * np.sum(x * x, axis=-1)) ** 2


def paraboloid() -> ChartManifold:
    return ChartManifold(
        dim=2,
        metric=paraboloid_metric,
        christoffel_fn=paraboloid_christoffel,
        acceleration_fn=paraboloid_acceleration,
        curvature_fn=lambda x, u, w: float(paraboloid_gaussian_curvature(x)),
        name="paraboloid",
        coords=("x", "y"),
    )


def height(x):
    """Height z = x^2 + y^2 of a Monge-chart point of the paraboloid."""
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)


# Same surface in polar coordinates (r, angle); r > 0, angle periodic.

def _polar_metric(x):
    x = np.asarray(x, dtype=float)
    r = x[..., 0]
    g = np.zeros(x.shape[:-1] + (2, 2))
    g[..., 0, 0] = 1.0 + 4.0 * r * r
    g[..., 1, 1] = r * r
    return g


def _polar_christoffel(x):
    x = np.asarray(x, dtype=float)
    r = x[..., 0]
    q = 1.0 + 4.0 * r * r
    gam = np.zeros(x.shape[:-1] + (2, 2, 2))
    gam[..., 0, 0, 0] = 4.0 * r / q
    gam[..., 0, 1, 1] = -r / q
    gam[..., 1, 0, 1] = 1.0 / r
    gam[..., 1, 1, 0] = 1.0 / r
    return gam


def paraboloid_polar() -> ChartManifold:
    return ChartManifold(
        dim=2,
        metric=_polar_metric,
        christoffel_fn=_polar_christoffel,
        periods=(None, 2.0 * np.pi),
        lower=(0.0, -np.inf),
        upper=(np.inf, np.inf),
        curvature_fn=lambda x, u, w: float(4.0 / (1.0 + 4.0 * x[0] ** 2) ** 2),
        name="paraboloid_polar",
        coords=("r", "angle"),
        sample_box=((0.2, 1.5), (0.0, 2.0 * np.pi)),
    )


def warped_m3() -> ChartManifold:
    from .warped import m3

    return m3().manifold


MANIFOLDS = {
    "plane": plane,
    "torus": flat_torus,
    "paraboloid": paraboloid,
    "paraboloid_polar": paraboloid_polar,
    "m3": warped_m3,
}


def get_manifold(key: str) -> ChartManifold:
    try:
        factory = MANIFOLDS[key]
    except KeyError:
        raise KeyError(f"unknown manifold {key!r}; choose from {sorted(MANIFOLDS)}") from None
    return factory()

"""Catalogue of scalar test functions, addressable by key.

Gradients are Riemannian gradients in chart components.
"""
from __future__ import annotations

import numpy as np

from .convexity import ConvexFunction
from .manifolds import height


def _arr(x):
    return np.asarray(x, dtype=float)


def quadratic(A) -> ConvexFunction:
    """x^T A x on the flat plane."""
    A = _arr(A)
    S = 0.5 * (A + A.T)
    return ConvexFunction(
        evaluate=lambda x: np.einsum("...i,ij,...j->...", _arr(x), S, _arr(x)),
        gradient=lambda x: 2.0 * _arr(x) @ S,
        hessian=lambda x, X, Y: 2.0 * X @ S @ Y,
        manifold="plane",
        name="quadratic",
    )


def sqnorm() -> ConvexFunction:
    f = quadratic(np.eye(2))
    return ConvexFunction(f.evaluate, f.gradient, f.hessian, "plane", "sqnorm")


def coordinate(i: int = 0, manifold: str = "plane") -> ConvexFunction:
    def grad(x):
        out = np.zeros_like(_arr(x))
        out[..., i] = 1.0
        return out

    return ConvexFunction(lambda x: _arr(x)[..., i], grad, lambda x, X, Y: 0.0, manifold, f"coord{i}")


def constant(c: float = 1.0, manifold: str = "torus") -> ConvexFunction:
    return ConvexFunction(lambda x: np.full(_arr(x).shape[:-1], float(c)), lambda x: np.zeros_like(_arr(x)),
                          lambda x, X, Y: 0.0, manifold, "constant")


def sin2pix() -> ConvexFunction:
    def grad(x):
        out = np.zeros_like(_arr(x))
        out[..., 0] = 2.0 * np.pi * np.cos(2.0 * np.pi * _arr(x)[..., 0])
        return out

    return ConvexFunction(lambda x: np.sin(2.0 * np.pi * _arr(x)[..., 0]), grad, None, "torus", "sin2pix")


# Paraboloid z = x^2 + y^2, Monge chart.

def _height_gradient(x):
    x = _arr(x)
    return 2.0 * x / (1.0 + 4.0 * np.sum(x * x, axis=-1))[..., None]


def height_function() -> ConvexFunction:
    return ConvexFunction(height, _height_gradient, None, "paraboloid", "height")


def zero(manifold: str = "paraboloid") -> ConvexFunction:
    return ConvexFunction(lambda x: np.zeros(_arr(x).shape[:-1]), lambda x: np.zeros_like(_arr(x)),
                          lambda x, X, Y: 0.0, manifold, "zero")


def hinge(level: float = 1.0) -> ConvexFunction:
    """max(z - level, 0): a convex increasing function of the height."""
    def evaluate(x):
        return np.maximum(height(x) - level, 0.0)

    def grad(x):
        return (height(x) > level)[..., None] * _height_gradient(x)

    return ConvexFunction(evaluate, grad, None, "paraboloid", f"hinge{level:g}")


def _meridian_arclength(r):
    return 0.5 * r * np.sqrt(1.0 + 4.0 * r * r) + 0.25 * np.arcsinh(2.0 * r)


def arclength_squared() -> ConvexFunction:
    """Squared meridian arclength from the vertex, i.e. squared distance to it."""
    def evaluate(x):
        r = np.sqrt(height(x))
        return _meridian_arclength(r) ** 2

    def grad(x):
        x = _arr(x)
        r = np.sqrt(height(x))
        s = _meridian_arclength(r)
        ratio = np.where(r > 0, s / np.where(r > 0, r, 1.0), 1.0)
        return (2.0 * ratio / np.sqrt(1.0 + 4.0 * r * r))[..., None] * x

    return ConvexFunction(evaluate, grad, None, "paraboloid", "arclength2")


def _m3_energy():
    from .warped import energy, m3

    return energy(m3())


FUNCTIONS = {
    "sqnorm": sqnorm,
    "coordinate": coordinate,
    "constant": constant,
    "sin2pix": sin2pix,
    "height": height_function,
    "zero": zero,
    "hinge": hinge,
    "arclength2": arclength_squared,
    "energy": _m3_energy,
}


def get_function(key: str, **params) -> ConvexFunction:
    try:
        factory = FUNCTIONS[key]
    except KeyError:
        raise KeyError(f"unknown function {key!r}; choose from {sorted(FUNCTIONS)}") from None
    return factory(**params)

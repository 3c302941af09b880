"""Numerical companion for convex functions on complete Riemannian manifolds.

Geodesics, curvature and convexity checks on chart manifolds, warped
products with a closed conformal field, recurrence of the geodesic flow,
and the regularised minimisation scheme with the paraboloid soul bound.
"""
from __future__ import annotations

from .convexity import ConvexFunction, ConvexityReport, certify, constancy_probe
from .errors import (
    CertificationError,
    ChartExitError,
    DegenerateMetricError,
    DegeneratePlaneError,
    DomainError,
    GeometryError,
    InapplicableError,
    StepUnderflowError,
)
from .flow import flip_conjugacy_check, flow, recurrence_experiment
from .geometry import (
    ChartManifold,
    GeodesicPath,
    PhasePoint,
    christoffel,
    exp_map,
    geodesic_integrate,
    parallel_transport,
    riemann_fd,
    sectional_curvature,
)
from .manifolds import MANIFOLDS, get_manifold
from .minimize import (
    beta,
    gradient_descent,
    loop_search,
    regularized_minimize,
    solve_mu1,
    soul_region_check,
)
from .warped import WarpedProduct, assemble, energy, m3, vertical_curvature

__version__ = "0.1.0"

"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class GeometryError(Exception):
    """Base class for numerical-geometry failures."""


class DegenerateMetricError(GeometryError):
    pass


class DomainError(GeometryError):
    pass


class DegeneratePlaneError(GeometryError):
    pass


class StepUnderflowError(GeometryError):
    pass


class ChartExitError(GeometryError):
    """A non-periodic coordinate left the chart bounds during integration.

    ``exit_time`` is the parameter of the last state inside the chart and
    ``path`` holds the states integrated up to that point.
    """

    def __init__(self, exit_time, path=None):
        super().__init__(f"geodesic left the chart at t={exit_time:.6g}")
        self.exit_time = exit_time
        self.path = path


class CertificationError(Exception):
    """A function required to be (strictly) convex failed certification."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InapplicableError(Exception):
    pass

"""Exception hierarchy shared across the package.

The CLI maps these groups onto its exit-code contract (config errors,
geometric degeneracies, integration divergence), so new failure modes
should subclass one of the classes below rather than raising bare
exceptions.
"""


class NonholoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NonholoError):
    """Bad user input: unknown model, malformed config, inconsistent state."""


class GeometryError(NonholoError):
    """Degenerate geometric data at an evaluated point."""


class NonInvertibleMetricError(GeometryError):
    """Metric matrix is singular or not positive definite."""


class DifferentiationError(GeometryError):
    """A numerical differentiation produced non-finite values."""


class DegenerateConstraintError(GeometryError):
    """Constraint one-forms lose rank at the evaluated point."""


class DegenerateDistributionError(GeometryError):
    """Gram matrix of the distribution basis is singular."""


class ActuationDegeneracyError(GeometryError):
    """Input and complement co-vectors fail to span the cotangent space."""


class StationarityDegenerateError(GeometryError):
    """Control Hessian of the stationarity system is singular."""


class IntegrationDivergedError(NonholoError):
    """Trajectory integration produced a non-finite state."""

    def __init__(self, message: str, t_last: float | None = None):
        super().__init__(message)
        self.t_last = t_last

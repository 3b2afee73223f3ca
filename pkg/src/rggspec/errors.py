"""Exception types shared across the package."""


class RggSpecError(Exception):
    """Base class for errors raised by this package."""


class CapacityError(RggSpecError):
    """Requested sample would exceed the configured point-count budget."""


class ClusterError(RggSpecError):
    """The cluster is unusable for posing a Dirichlet problem."""


class NoInteriorError(ClusterError):
    pass


class NoBoundaryLayerError(ClusterError):
    pass


class DimensionMismatch(RggSpecError, ValueError):
    pass


class NonConvergence(RggSpecError):
    """An iterative solver stopped before meeting its tolerance.

    ``partial`` carries whatever the solver had at the time it gave up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateAlignmentFailure(RggSpecError):
    pass


class InsufficientDepth(RggSpecError):
    pass


class ConfigError(RggSpecError):
    pass

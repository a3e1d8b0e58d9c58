"""Exception types raised across the package."""


class RpdeError(Exception):
    """Base class for all errors raised by rpde."""


class ResourceLimitError(RpdeError):
    pass


class ConvergenceError(RpdeError):
    """Iterative solver stopped before reaching the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericError(RpdeError):
    pass


class InvalidCoefficientError(RpdeError):
    pass


class EmbeddingError(RpdeError):
    """Circulant embedding is not nonnegative definite at the requested padding."""


class UnsupportedModelError(RpdeError):
    pass


class EstimationError(RpdeError):
    """Too many replicates failed for the estimate to be trusted."""


class ConfigError(RpdeError):
    pass

"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes or lengths are inconsistent with the declared dimensions."""


class SingularModelError(ArithmeticError):
    """A covariance or normal matrix could not be factorized, even after jitter."""


class NumericalFailure(ArithmeticError):
    """An iterative procedure produced non-finite values."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""

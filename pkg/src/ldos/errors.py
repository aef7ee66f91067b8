"""Exception hierarchy shared by every module of the package."""


class LdosError(Exception):
    """Base class for all errors raised by ``ldos``."""


class ConfigurationError(LdosError, ValueError):
    """Inputs are inconsistent (shape mismatch, invalid parameter, bad config)."""


class PreconditionError(LdosError, ValueError):
    """An input violates a documented precondition (e.g. unnormalized state)."""


class NumericalError(LdosError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""


class DegenerateInputError(LdosError, ValueError):
    """Input carries no usable information for the requested quantity."""


class EmptyBandError(LdosError, ValueError):
    """A phase band needed by the computation holds no eigenphases or counts."""


class DataError(LdosError, ValueError):
    """Measurement records are malformed or out of range."""

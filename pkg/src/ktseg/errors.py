"""Exception types shared across the toolkit."""


class KtsegError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(KtsegError):
    """Input data violates an invariant (bad label value, geometry mismatch, ...)."""


class ConfigError(KtsegError):
    """A parameter or configuration value is out of its allowed range."""


class FitError(KtsegError):
    """Not enough samples to fit a statistic."""


class PhantomError(KtsegError):
    """A phantom specification cannot be realized."""

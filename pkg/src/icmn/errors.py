"""Exception types shared across the package."""


class ICMNError(Exception):
    """Base class for all package errors."""


class ParameterError(ICMNError, ValueError):
    """An input parameter is outside its valid domain."""


class ConfigurationError(ICMNError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class InstabilityError(ICMNError, ValueError):
    """The requested load is at or beyond capacity, so delay is unbounded."""


class TraceParseError(ICMNError, ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class LowSampleWarning(UserWarning):
    """Estimate was computed from too few samples to be meaningful."""


class ApproximationWarning(UserWarning):
    """A closed-form approximation is used outside its intended regime."""

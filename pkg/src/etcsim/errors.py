"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Run configuration or design parameters violate a documented invariant."""


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


class DecodeError(RuntimeError):
    """Packet contents are inconsistent with the reception time."""


class DivergenceError(RuntimeError):
    """State grew past the overflow threshold. Carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace

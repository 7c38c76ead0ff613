"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """Raised when an input violates a mathematical precondition."""


class ConfigError(ValueError):
    """Raised when an experiment configuration fails validation."""


class ClippingWarning(UserWarning):
    """A dilated cube was clipped to the computational box."""

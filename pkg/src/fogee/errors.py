class ConfigError(ValueError):
    """Raised for invalid scenario or experiment configuration."""


class InvariantViolation(RuntimeError):
    """Raised when a model invariant (e.g. idle F-AP with nonzero beams) is broken."""

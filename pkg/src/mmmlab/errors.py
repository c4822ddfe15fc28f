class DomainError(ValueError):
    """Invalid argument or violated precondition."""


class CapabilityError(RuntimeError):
    """Request exceeds what the implementation can decide exactly."""

class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class ShapeError(ValueError):
    """Batch shapes cannot be broadcast together."""


class GimbalLockWarning(UserWarning):
    """Euler decomposition hit a singularity; the last angle was set to zero."""

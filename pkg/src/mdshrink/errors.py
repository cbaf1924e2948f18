"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the set on which a formula is defined."""


class PreconditionError(ValueError):
    """An input object violates a structural requirement (shape, symmetry, orthonormality)."""


class ConfigurationError(ValueError):
    """An experiment configuration cannot be run as given."""


class SimulationError(RuntimeError):
    """A Monte-Carlo repetition failed; the message carries the cell and repetition."""

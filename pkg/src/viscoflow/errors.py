"""Exception types shared across the package."""


class InputError(ValueError):
    """Caller handed data that violates a documented precondition."""


class ConfigurationError(ValueError):
    """Physical or numerical parameters are inconsistent (e.g. ellipticity)."""


class StabilityError(RuntimeError):
    """A run left the regime where the scheme is valid (CFL, density bound)."""


class InvariantViolation(RuntimeError):
    """A quantity the theory guarantees failed numerically; never silenced."""


class DiagnosticError(RuntimeError):
    """A measurement could not be made reliably (e.g. fit window too short)."""

"""Exception types shared across the package."""


class AnaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AnaError, ValueError):
    """Invalid configuration or parameter combination."""


class DomainError(AnaError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ShapeError(AnaError, ValueError):
    """Array dimensions do not chain."""


class NumericError(AnaError, ArithmeticError):
    """NaN or infinity appeared where a finite value is required."""


class StateError(AnaError, RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class UnsupportedFamilyError(ConfigError):
    """Noise family not admissible for the requested operation."""

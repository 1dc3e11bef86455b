from typing import Optional


class PolymerLabError(Exception):
    """Base class of every error raised by polymer_lab."""


class DomainError(PolymerLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation (dimension, parity, depth)."""


class ParameterError(PolymerLabError, ValueError):
    """Disorder family parameters or an inverse temperature are out of range."""


class ConfigError(PolymerLabError, ValueError):
    pass


class ResourceError(PolymerLabError, RuntimeError):
    """A lattice box, table or coordinate packing would exceed its budget.

    Args:
        message (str): description of the exhausted resource.
        reached (int, optional): the time step reached before the budget was hit.
    """

    def __init__(self, message: str, reached: Optional[int] = None):
        if reached is not None:
            message = f"{message} (reached k={reached})"
        super().__init__(message)
        self.reached = reached


class PrecisionError(PolymerLabError, ArithmeticError):
    """The requested tolerance cannot be met; ``achievable`` holds the best bound found."""

    def __init__(self, message: str, achievable: float):
        super().__init__(f"{message}; achievable error bound {achievable:.3e}")
        self.achievable = achievable


class UndefinedMomentError(PolymerLabError, ArithmeticError):
    """The second moment of the limiting partition function is infinite outside the L2 region."""


class DegenerateTestError(PolymerLabError, RuntimeError):
    pass


class RareEventError(PolymerLabError, RuntimeError):
    pass


__all__ = [
    "PolymerLabError",
    "DomainError",
    "ParameterError",
    "ConfigError",
    "ResourceError",
    "PrecisionError",
    "UndefinedMomentError",
    "DegenerateTestError",
    "RareEventError",
]

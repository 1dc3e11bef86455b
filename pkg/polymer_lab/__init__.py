from .errors import (
    ConfigError,
    DegenerateTestError,
    DomainError,
    ParameterError,
    PolymerLabError,
    PrecisionError,
    RareEventError,
    ResourceError,
    UndefinedMomentError,
)
from .version import __version__

__all__ = [
    "ConfigError",
    "DegenerateTestError",
    "DomainError",
    "ParameterError",
    "PolymerLabError",
    "PrecisionError",
    "RareEventError",
    "ResourceError",
    "UndefinedMomentError",
    "__version__",
]

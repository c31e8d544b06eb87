"""Credit-portfolio loss distributions via mod-Poisson approximation schemes."""

from .errors import (
    DegenerateTrancheError,
    DomainError,
    InputError,
    LargeDeviationUndefined,
    ModPhiError,
    NumericError,
    ResourceError,
    UnsupportedOrderError,
)

__version__ = "0.1.0"

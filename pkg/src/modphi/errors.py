"""Exception hierarchy shared by all modules."""


class ModPhiError(Exception):
    """Base class for errors raised by :mod:`modphi`."""


class InputError(ModPhiError, ValueError):
    """Arguments violate a documented precondition."""


class UnsupportedOrderError(InputError):
    """Requested approximation order is outside the supported range."""


class DomainError(InputError):
    """A numerical argument lies outside the domain of the function."""


class LargeDeviationUndefined(ModPhiError):
    """The optimal tilt is zero, so the large deviations estimator is undefined.

    Raised when the tail point lies at or below the conditional mean. The
    factor-mixing layer catches it and substitutes a tail value of one.
    """


class ResourceError(ModPhiError, MemoryError):
    """A computation would exceed the configured memory budget."""


class NumericError(ModPhiError, ArithmeticError):
    """A per-slice evaluation failed; carries the offending quadrature node."""

    def __init__(self, message, node_index=None):
        super().__init__(message)
        self.node_index = node_index


class DegenerateTrancheError(ModPhiError):
    """The premium leg of a tranche vanishes, so no fair spread exists."""

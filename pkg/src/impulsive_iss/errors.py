"""Exception hierarchy shared by all modules."""


class ImpulsiveISSError(Exception):
    """Base class for every error raised by the package."""


class HorizonError(ImpulsiveISSError, ValueError):
    """A query reaches past the working horizon of an impulse sequence."""


class ArgumentError(ImpulsiveISSError, ValueError):
    """Bad argument ordering or value (e.g. ``t < s``)."""


class PreconditionError(ImpulsiveISSError, ValueError):
    """A mathematical hypothesis required by an operation does not hold."""


class ConfigurationError(ImpulsiveISSError, ValueError):
    """Inconsistent model definition (missing reset map, bad schema, ...)."""


class WrongVariantError(ImpulsiveISSError, ValueError):
    """The requested certificate variant does not match the bound (M = 0 vs M > 0)."""


class NotExponentiallyStableError(ImpulsiveISSError):
    """No decay rate on the search grid yields an envelope below the overshoot cap."""


class EscapeError(ImpulsiveISSError):
    """Finite-escape guard tripped during simulation."""

    def __init__(self, time, norm, cap):
        self.time = float(time)
        self.norm = float(norm)
        self.cap = float(cap)
        super().__init__(
            f"state norm {self.norm:.6g} exceeded blowup cap {self.cap:.6g} at t={self.time:.9g}"
        )


class ThresholdError(ImpulsiveISSError):
    """A strict inequality required by a certificate formula is violated.

    ``lhs < rhs`` is the inequality that should have held.
    """

    def __init__(self, quantity, value, bound, inequality=None):
        self.quantity = quantity
        self.value = float(value)
        self.bound = float(bound)
        self.inequality = inequality or f"{quantity} < bound"
        super().__init__(
            f"threshold violated: {self.inequality} requires "
            f"{quantity} = {self.value:.12g} < {self.bound:.12g}"
        )

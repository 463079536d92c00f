"""Exception types shared across the package."""


class DoorwayError(Exception):
    """Base class for all errors raised by :mod:`doorway`."""


class InvalidArgumentError(DoorwayError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(DoorwayError, ArithmeticError):
    """A numerical routine failed to reach its accuracy contract.

    Attributes
    ----------
    details : dict
        Diagnostic payload (best estimate, error bound, offending seed, ...).
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def __str__(self):
        base = super().__str__()
        if not self.details:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.details.items())
        return f"{base} ({extra})"

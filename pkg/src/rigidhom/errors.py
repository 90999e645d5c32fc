"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class UnsupportedDirectionError(InvalidArgumentError):
    """A direction has no rational representation within the configured cap."""


class OutOfRegimeError(InvalidArgumentError):
    """Inputs fall outside the asymptotic regime an operation is valid in."""


class AmbiguousProjectionError(InvalidArgumentError):
    """The nearest-rotation projection is not unique for this matrix."""


class InternalInvariantError(RuntimeError):
    """An internal invariant was breached; indicates a bug, not bad input."""

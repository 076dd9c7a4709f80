"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """An iterative numerical routine failed (non-convergence, non-finite values).

    Carries the offending residual and, for network evaluation, the index of
    the layer that produced the failure.
    """

    def __init__(self, message, *, residual=None, layer=None):
        super().__init__(message)
        self.residual = residual
        self.layer = layer


class NotPsdError(NumericalError):
    """A matrix required to be positive semi-definite is not."""


class EmptyStateError(ValueError):
    """An alignment state with no accumulated trials was asked to whiten."""


class FormatError(ValueError):
    """A binary container is malformed.

    ``field`` names the offending header field when known; ``offset`` is the
    byte position at which the problem was detected.
    """

    def __init__(self, message, *, field=None, offset=None):
        super().__init__(message)
        self.field = field
        self.offset = offset

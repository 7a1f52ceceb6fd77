from typing import List, Optional


class EirnriError(Exception):
    """Base class for every error raised by the solver package."""


class InvalidArgumentError(EirnriError, ValueError):
    pass


class ConfigurationError(EirnriError, ValueError):
    pass


class InvariantViolationError(EirnriError, AssertionError):
    pass


class NumericalError(EirnriError, ArithmeticError):
    pass


class ImageIOError(EirnriError, OSError):
    pass


class CertifiedFailureError(EirnriError):
    """
    Raised by `solve` when a runtime certificate fails.

    The records gathered up to the failing iteration are kept on the
    exception so callers can still write a partial trace.
    """

    def __init__(self, check: str, k: int, message: str, trace: Optional[List] = None):
        super().__init__(f"certificate '{check}' failed at iteration {k}: {message}")
        self.check = check
        self.k = k
        self.trace = trace if trace is not None else []

"""Exception hierarchy shared by every fedipm module."""


class FedIPMError(Exception):
    """Base class for all errors raised by fedipm."""


class DomainViolation(FedIPMError, ValueError):
    """A point lies on or outside the boundary of a barrier's domain."""


class SingularHessian(FedIPMError, ArithmeticError):
    pass


class RankDeficient(FedIPMError, ArithmeticError):
    """``A W A^T`` is singular beyond tolerance."""


class NumericalBreakdown(FedIPMError, ArithmeticError):
    """Every singular value of a matrix fell below the pseudo-inverse cutoff."""


class SingularG(FedIPMError, ArithmeticError):
    """The sketched Gram product ``R^T R B^{-1} S^T S`` is not invertible."""


class LineSearchFailed(FedIPMError, RuntimeError):
    pass


class NonConvergence(FedIPMError, RuntimeError):
    pass


class CenteringTooLoose(FedIPMError, RuntimeError):
    pass


class IterationCapExceeded(FedIPMError, RuntimeError):
    """Raised when the path schedule is not finished within the iteration cap.

    The best iterate found so far is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class UnsupportedLoss(FedIPMError, ValueError):
    pass


class MissingUpload(FedIPMError, RuntimeError):
    pass


class ProtocolError(FedIPMError, RuntimeError):
    pass


class SizeTooLarge(FedIPMError, ValueError):
    pass


class ProblemFormatError(FedIPMError, ValueError):
    """A problem file failed to parse or violates instance invariants."""

"""Exception hierarchy shared by every module."""


class SupersolError(Exception):
    """Base class for all errors raised by this package."""


class GridTooCoarse(SupersolError):
    pass


class EmptyRegion(SupersolError):
    pass


class GridMismatch(SupersolError):
    pass


class ExprSyntaxError(SupersolError):
    """Parse failure. ``offset`` is the 1-based column of the offending character."""

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {' '.join(self.expected)})"
        super().__init__(detail)


class UnboundVariable(SupersolError):
    pass


class DomainError(SupersolError):
    """Evaluation left the domain of an operation (log of 0, 1/0, ...)."""


class ValidationFailed(SupersolError):
    def __init__(self, report):
        self.report = report
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        super().__init__(f"problem hypotheses violated: {failed}")


class NoConvergence(SupersolError):
    def __init__(self, what, iterations):
        self.iterations = iterations
        super().__init__(f"{what} did not converge within {iterations} iterations")


class UnsupportedDimension(SupersolError):
    pass


class EpsilonNotFound(SupersolError):
    pass


class DegenerateBand(SupersolError):
    pass


class KSearchDiverged(SupersolError):
    pass


class NotNondegenerate(SupersolError):
    pass


class MonotonicityBroken(SupersolError):
    pass

"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so that callers (the CLI
in particular) can flag a single record and keep going.
"""


class QFIError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(QFIError):
    """A computation could not produce a trustworthy number."""


class NotHermitian(NumericalError, ValueError):
    pass


class NotPSD(NumericalError, ValueError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class InvariantViolation(NumericalError):
    pass


class ExtrapolationDiverged(NumericalError):
    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates


class DegenerateKernelNeedsDirection(NumericalError):
    pass


class DomainError(QFIError, ValueError):
    pass


class UnknownFamily(QFIError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown family"


class DimensionMismatch(QFIError, ValueError):
    pass


class MissingSecondDerivatives(QFIError, ValueError):
    pass


class BasisMismatch(QFIError, ValueError):
    pass


class RefusedPathologicalPoint(QFIError):
    pass


class InvalidNu(QFIError, ValueError):
    pass


class Rho0NotFullRank(QFIError, ValueError):
    pass


class NotCoDiagonal(QFIError, ValueError):
    pass


class ScenarioError(QFIError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(ScenarioError, ValueError):
    pass

"""Exception hierarchy shared by every module."""


class CmotError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CmotError, ValueError):
    pass


class AllZeroWeights(ValidationError):
    pass


class NegativeWeight(ValidationError):
    pass


class ZeroMassRow(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NumericalBreakdown(CmotError, ArithmeticError):
    pass


class TargetsOutsideCandidates(ValidationError):
    pass


class MarginalMismatch(ValidationError):
    pass


class GridOverflow(CmotError):
    pass


class SchemaViolation(ValidationError):
    """Scenario file does not match the schema; ``pointer`` is a JSON pointer."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"


class InfeasibleInstance(CmotError):
    """Raised by solvers when the instance admits no plan; carries the report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NoAdmissibleExchange(CmotError):
    pass

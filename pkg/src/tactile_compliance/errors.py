"""Exception hierarchy.

The CLI maps the three top-level families to exit codes:
``ConfigParseError`` -> 2, ``DataError`` -> 3, ``TrainingError`` -> 4.
"""


class ComplianceError(Exception):
    """Base class for all package errors."""


class ConfigParseError(ComplianceError):
    pass


class DataError(ComplianceError):
    pass


class TrainingError(ComplianceError):
    pass


# dataset loading / cleaning


class MissingFile(DataError):
    pass


class MalformedRow(DataError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class DuplicateObjectId(DataError):
    pass


class MissingFrameFile(DataError):
    pass


class TrajectoryLengthMismatch(DataError):
    pass


class UnknownObjectId(DataError):
    pass


class EmptyAfterCleaning(DataError):
    pass


class TooFewObjects(DataError):
    pass


class StrategyMismatch(DataError):
    """Batch contents disagree with the model's input strategy."""


# contact physics


class PhysicsError(ComplianceError, ValueError):
    pass


class OutOfRangeHardness(PhysicsError):
    pass


class InsufficientIndentation(PhysicsError):
    pass


class NonPositiveModulus(PhysicsError):
    pass


class DegenerateGeometry(PhysicsError):
    pass


# tensors / layers


class ShapeMismatch(ComplianceError, ValueError):
    pass


class HeadDivisibility(ShapeMismatch):
    pass


class LengthMismatch(ComplianceError, ValueError):
    pass


class UninitializedGradients(ComplianceError, RuntimeError):
    pass


# metrics / reports


class NonPositiveValue(ComplianceError, ValueError):
    pass


class ConstantTruths(ComplianceError, ValueError):
    pass


class UnknownKey(ComplianceError, KeyError):
    pass


class DivergedTraining(TrainingError):
    pass

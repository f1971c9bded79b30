"""Exception taxonomy.

Two families: :class:`ValidationError` for bad inputs or misuse (CLI exit
code 1) and :class:`NumericalError` for runtime numerical failures such as
factorization breakdown or non-finite losses (CLI exit code 2).
"""


class FmpError(Exception):
    pass


class ValidationError(FmpError):
    pass


class NumericalError(FmpError):
    pass


# graph construction / operations
class IndexOutOfRange(ValidationError):
    pass


class SelfLoopInInput(ValidationError):
    pass


class DuplicateEdge(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyEdgeSet(ValidationError):
    pass


class SingleGroup(ValidationError):
    pass


# synthetic generation
class ProbabilityOutOfRange(ValidationError):
    pass


class NonPositiveDefinite(NumericalError):
    pass


class UnequalCovariance(ValidationError):
    pass


# bias metrics
class SingularCovariance(NumericalError):
    pass


class GroupTooSmall(ValidationError):
    pass


class NoPositivesInGroup(ValidationError):
    pass


# autodiff tape
class ShapeMismatch(ValidationError):
    pass


class BackwardBeforeForward(ValidationError):
    pass


class NonScalarLoss(ValidationError):
    pass


# dataset ingestion
class MissingFile(ValidationError):
    pass


class RowCountMismatch(ValidationError):
    pass


class NonBinaryLabel(ValidationError):
    pass


class NonBinarySensitive(ValidationError):
    pass

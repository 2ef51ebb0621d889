"""Exception hierarchy shared by every module."""

from __future__ import annotations


class NBRobustError(Exception):
    """Base class for all package errors."""


# -- data -------------------------------------------------------------------


class MalformedCsv(NBRobustError):
    pass


class NullLabel(NBRobustError):
    pass


class SchemaMismatch(NBRobustError):
    pass


class NonNumeric(NBRobustError):
    pass


class NotComplete(NBRobustError):
    """An operation that needs a complete dataset received missing cells."""


# -- stats / decision -------------------------------------------------------


class EmptyDataset(NBRobustError):
    pass


class IncompletePoint(NBRobustError):
    def __init__(self, message: str, point_id: int | None = None):
        super().__init__(message)
        self.point_id = point_id


class TooManyWorlds(NBRobustError):
    pass


class EmptyDomain(NBRobustError):
    pass


# -- poisoning --------------------------------------------------------------


class AttackError(NBRobustError):
    """Base for failures that mean an attack could not be produced."""

    point_id: int | None = None


class Infeasible(AttackError):
    pass


class AllInfeasible(AttackError):
    pass


class AmbiguousPrediction(AttackError):
    pass


class BudgetExhausted(AttackError):
    pass


class StuckNoLegalStep(AttackError):
    pass


class UnionConflict(AttackError):
    """Per-point plans that each work but not once merged."""

"""
Errors Module - hedgekit.
Hiérarchie d'exceptions : erreurs de validation (code de sortie 2)
et échecs numériques du solveur (code de sortie 3).
"""

from typing import Optional


class HedgeKitError(Exception):
    """Racine de toutes les erreurs du projet."""


class ValidationError(HedgeKitError, ValueError):
    """
    Entrée invalide (dimensions, symétrie, unités, paramètres hors domaine).
    
    Attributes:
        field: Nom du champ fautif, si connu
    """
    
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DimensionMismatch(ValidationError):
    pass


class ZeroNetNotional(ValidationError):
    pass


class EmptyHedgeUniverse(ValidationError):
    pass


class UnitMismatch(ValidationError):
    pass


class NonSymmetric(ValidationError):
    pass


class NonSymmetricCov(NonSymmetric):
    pass


class NotPositiveDefinite(ValidationError):
    pass


class Lambda0OutOfRange(ValidationError):
    pass


class NotDiagonal(ValidationError):
    pass


class NonPositiveDiagonal(ValidationError):
    pass


class InvalidBond(ValidationError):
    pass


class InvalidInput(ValidationError):
    pass


class SolverError(HedgeKitError, RuntimeError):
    """Échec numérique : problème infaisable, non borné ou factorisation impossible."""


class Infeasible(SolverError):
    pass


class Unbounded(SolverError):
    pass


class NumericalFailure(SolverError):
    pass


class CovFactorizationFailure(SolverError):
    pass


class CalibrationFailure(SolverError):
    pass

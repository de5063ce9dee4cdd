"""
errors.py - Hiérarchie des exceptions

Toutes les erreurs levées par la bibliothèque dérivent de AstError ; les
sous-classes héritent aussi de l'exception standard la plus proche afin que
le code appelant puisse continuer à intercepter ValueError / ArithmeticError.
"""


class AstError(Exception):
    """Base de toutes les erreurs de la bibliothèque."""


class DimensionError(AstError, ValueError):
    """Formes incompatibles ou étendues dégénérées."""


class ConfigError(AstError, ValueError):
    """Configuration invalide (variante inconnue, lr <= 0, noyau incorrect...)."""


class NumericError(AstError, ArithmeticError):
    """Valeurs non finies rencontrées pendant un calcul."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UsageError(AstError):
    """Mauvaise utilisation de l'API (perte non scalaire, noms dupliqués...)."""


class FormatError(AstError, ValueError):
    """Fichier TNSR ou JSON mal formé ; `offset` désigne l'octet fautif."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)
        self.offset = offset

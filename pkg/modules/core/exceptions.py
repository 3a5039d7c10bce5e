"""
Error types raised by the library. Each one also derives from the builtin
that best describes it, so callers may catch ``ValueError`` / ``RuntimeError``.
"""


class IsoElastError(Exception):
    """Base class for all library errors."""


class KnotVectorError(IsoElastError, ValueError):
    pass


class SpaceParameterError(IsoElastError, ValueError):
    """Invalid (degree, regularity) combination for a space or projector."""


class GeometryDegeneracyError(IsoElastError, ValueError):
    """det J <= 0 somewhere the map is evaluated."""


class InversionError(IsoElastError, RuntimeError):
    """Newton inversion of a patch map did not converge."""


class ConformityError(IsoElastError, ValueError):
    """Patch interfaces do not match, or an interface is declared twice."""


class BoundaryLayoutError(IsoElastError, ValueError):
    pass


class RankDeficiencyError(IsoElastError, RuntimeError):
    def __init__(self, message: str, block: str = None):
        super().__init__(message)
        self.block = block


class DofBudgetError(IsoElastError, ValueError):
    pass


class UnknownCaseError(IsoElastError, KeyError):
    pass

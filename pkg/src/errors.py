"""Error types raised across the package.

Every domain failure is a ``ValueError`` subclass so callers that only know
about ``ValueError`` keep working.
"""


class HnnWalkError(ValueError):
    pass


# group specification
class NotAGroupTable(HnnWalkError):
    pass


class NotASubgroup(HnnWalkError):
    pass


class NotAnIsomorphism(HnnWalkError):
    pass


class TrivialityViolation(HnnWalkError):
    """Integers base with a nontrivial associated subgroup."""


class UnknownLetter(HnnWalkError):
    pass


class InvalidParams(HnnWalkError):
    pass


# statistics
class InsufficientData(HnnWalkError):
    pass


class NoRegenerations(HnnWalkError):
    pass


class RegimeError(HnnWalkError):
    pass


class DomainError(HnnWalkError):
    pass


class ZeroHitEstimate(HnnWalkError):
    pass


# orchestration
class ConfigError(HnnWalkError):
    pass


class GridError(HnnWalkError):
    pass

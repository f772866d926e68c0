"""Exception hierarchy shared across the package.

Every error raised on purpose derives from GwolabError so callers (and the
command line front end) can map failure classes to exit codes.
"""

from __future__ import annotations


class GwolabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GwolabError):
    """Malformed model or experiment configuration (bad keys, bad values)."""


class DivergentMoment(GwolabError):
    """A moment series could not be certified convergent within tolerance."""


class ShapeMismatch(GwolabError):
    """Truncated-series operands disagree in variable count or degree cap."""


class NonpositiveConstantTerm(GwolabError):
    """Square root of a series whose constant term is not strictly positive."""


class UnsupportedModel(GwolabError):
    """The exact engine cannot enumerate this model at the requested horizon."""


class ZeroConditioningEvent(GwolabError):
    """Conditioning on survival at a time where survival has probability 0."""


class CapTooLarge(GwolabError):
    """A series-valued recursion would exceed the configured memory budget."""


class BudgetExhausted(GwolabError):
    """Rejection sampling hit its attempt cap before reaching the target."""


class OracleBlowup(GwolabError):
    """Exhaustive enumeration exceeded its node budget."""

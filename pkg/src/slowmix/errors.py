"""Exception hierarchy.

The CLI maps the three families below onto exit codes:
``ConfigError`` -> 2, ``NumericError`` -> 3, ``CertificateUnavailable`` -> 4.
"""


class SlowmixError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SlowmixError, ValueError):
    pass


class NumericError(SlowmixError, ArithmeticError):
    pass


class CertificateUnavailable(SlowmixError):
    pass


# -- tree_model -------------------------------------------------------------

class InvalidTree(ConfigError):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class SuffixClash(InvalidTree):
    pass


class KraftViolation(InvalidTree):
    pass


class HistoryTooShort(ConfigError):
    pass


class DepthTooSmall(ConfigError):
    pass


class NotShiftClosed(ConfigError):
    """Emitting a symbol from a leaf does not determine the next leaf."""


class NoConvergence(NumericError):
    pass


# -- decay ------------------------------------------------------------------

class NotSummable(ConfigError):
    pass


# -- aggregation / estimator ------------------------------------------------

class DeltaTooLarge(CertificateUnavailable):
    pass


class InconsistentAggregation(NumericError):
    pass


class UnreachableContext(NumericError):
    pass


class PastTooShort(ConfigError):
    pass


class BadZeta(ConfigError):
    pass


class BadDepth(ConfigError):
    pass


class EmptyGoodSet(CertificateUnavailable):
    pass


class NotAperiodic(CertificateUnavailable):
    pass


class EtaZero(CertificateUnavailable):
    pass


class RatiosNotNormalized(ConfigError):
    pass


# -- coupling ---------------------------------------------------------------

class ExcursionCap(NumericError):
    def __init__(self, message, steps=0):
        super().__init__(message)
        self.steps = steps

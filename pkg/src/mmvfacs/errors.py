"""Exception types raised across the package."""


class MMVError(ValueError):
    """Base class for every error raised by mmvfacs."""


class RankDeficient(MMVError):
    pass


class DimensionMismatch(MMVError):
    pass


class InvalidSparsity(MMVError):
    pass


class UnionTooLarge(MMVError):
    pass


class NonConvergence(MMVError):
    pass


class BudgetExceeded(MMVError):
    pass


class DeltaOutOfRange(MMVError):
    pass


class PremiseViolated(MMVError):
    pass


class ZeroSignal(MMVError):
    pass


class MalformedCsv(MMVError):
    pass


class ConfigInvalid(MMVError):
    pass


class TrialFailed(MMVError):
    """A solver failed inside a sweep running in strict mode."""

"""Exception hierarchy shared by all banditlab modules."""


class BanditLabError(Exception):
    """Base class for all errors raised by this package."""


class EmptySample(BanditLabError):
    """An empirical distribution was requested from zero observations."""


class DomainError(BanditLabError):
    """An argument is outside the mathematical domain of the operation."""


class DegenerateSample(BanditLabError):
    """A sample statistic needed by the operation is degenerate (e.g. zero variance)."""


class DegenerateWeight(BanditLabError):
    """A simplex weight vector has a non-positive bonus coordinate."""


class TieError(BanditLabError):
    """Atoms passed to the exact Dirichlet formula are not pairwise distinct."""


class NonConvergence(BanditLabError):
    """An iterative solver stopped without certifying its tolerance."""


class ConfigError(BanditLabError):
    """An experiment configuration is malformed or inconsistent."""


class NumericFailure(BanditLabError):
    """A numeric computation failed in a way the caller cannot recover from."""

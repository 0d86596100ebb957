"""Exception types shared across the package."""


class PolarPriorError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(PolarPriorError):
    """A matrix required to be symmetric positive definite is not."""


class NotPsd(PolarPriorError):
    """A constructed correlation matrix lost positive semi-definiteness."""


class RankDeficient(PolarPriorError):
    """A matrix required to have full column rank is (numerically) rank deficient."""


class NotOrthogonal(PolarPriorError):
    """A matrix required to be orthogonal is not, within tolerance."""


class DomainError(PolarPriorError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionMismatch(PolarPriorError, ValueError):
    """Array shapes do not conform."""


class LengthMismatch(DimensionMismatch):
    """Paired sample arrays have different lengths."""


class NumericOverflow(PolarPriorError, OverflowError):
    """A special-function evaluation overflowed the floating-point range."""


class NumericUnderflow(PolarPriorError):
    """A special-function evaluation underflowed to zero."""


class GradientAuditFailed(PolarPriorError):
    """A model gradient disagreed with finite differences at startup."""


class AllDivergent(PolarPriorError):
    """More than half of the post-warmup HMC trajectories diverged."""


class TooFewDraws(PolarPriorError, ValueError):
    """Not enough chains or draws to compute convergence diagnostics."""


class EmptyChain(PolarPriorError, ValueError):
    """An operation on posterior draws received an empty chain."""


class SingleClass(PolarPriorError, ValueError):
    """AUC requires both positive and negative labels."""


class NoObservedDyads(PolarPriorError, ValueError):
    """A network likelihood needs at least one observed dyad."""


class ParseError(PolarPriorError, ValueError):
    """A configuration document or CSV file could not be parsed."""


class ValidationError(PolarPriorError, ValueError):
    """A configuration document violated one or more constraints.

    The message lists every violation at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class Ragged(ParseError):
    """CSV rows have inconsistent lengths."""


class NonBinary(ParseError):
    """An adjacency CSV contains entries other than 0, 1, or NA."""


class Asymmetric(ParseError):
    """An adjacency CSV disagrees on a mutually observed dyad."""

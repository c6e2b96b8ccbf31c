"""Exception types.

``NumericalError`` subclasses mark numerical failures (instability, overflow,
truncation); the CLI maps them to exit status 2. The remaining errors are
violated preconditions.
"""


class PathMeasureError(Exception):
    """Base class for all package errors."""


class NumericalError(PathMeasureError):
    """A computation became unstable or left its validity region."""


class NonPositiveTime(PathMeasureError, ValueError):
    pass


class UnstableSymbol(NumericalError):
    """A Fourier multiplier grows beyond the stability gate or overflow guard."""


class NoSymbol(PathMeasureError, TypeError):
    """The kernel has no Fourier multiplier (two-point or tabulated kernel)."""


class UndefinedTime(PathMeasureError, ValueError):
    """A tabulated kernel was evaluated at a time it does not sample."""


class TruncationBudgetExceeded(NumericalError):
    """Kernel mass outside the grid exceeds the truncation budget."""


class PotentialOverflow(NumericalError):
    """``exp(-V dt)`` overflows or ``V`` is not finite on the grid."""


class ActionRangeUnbounded(PathMeasureError, ValueError):
    """The potential is not bounded above and below on the grid."""


class UnboundedComposite(PathMeasureError, ValueError):
    """None of the sufficient conditions for a bounded path functional holds."""


class ImplicitDenominatorVanishes(NumericalError):
    """``1 + (ds/2) V(x)`` is not positive somewhere on the grid."""


class BoundaryMassLeak(NumericalError):
    """The finite-difference solution reached the Dirichlet boundary."""


class ConfigError(PathMeasureError):
    """Base class for run-configuration problems."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")

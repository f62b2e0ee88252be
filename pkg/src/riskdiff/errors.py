"""Exception hierarchy shared across the package."""


class RiskdiffError(Exception):
    """Base class for all riskdiff errors."""


class ParameterError(RiskdiffError, ValueError):
    """Invalid model or driver parameters (e.g. b <= 0, |rho| > 1, gamma <= 0)."""


class DomainError(RiskdiffError, ValueError):
    """Input outside the operation's domain (e.g. sigma(v) <= 0, n_paths = 0)."""


class FitError(RiskdiffError):
    """Regression could not be fitted (rank deficiency, too few samples)."""


class TrainingDivergedError(FitError):
    """Network training produced a non-finite loss."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class SolverError(RiskdiffError):
    """Backward solve produced non-finite values."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ConjugateRadiusError(RiskdiffError):
    """Maximizer of the conjugate search hit the boundary; enlarge the radius."""


class InversionError(RiskdiffError):
    """Implied volatility inversion failed (price outside no-arbitrage bounds)."""


class TreeSizeError(RiskdiffError, ValueError):
    """Oracle tree requested beyond the exact-enumeration cap."""

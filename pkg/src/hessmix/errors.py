"""Exception hierarchy shared across the package."""


class HessmixError(Exception):
    """Base class for all package-specific failures."""


class ConeViolationError(HessmixError):
    """An eigenvalue vector left the admissible cone where positivity was required."""

    def __init__(self, message, sigmas=None, where=None):
        super().__init__(message)
        self.sigmas = sigmas
        self.where = where


class AdmissibilityError(HessmixError):
    """A grid field lost admissibility; carries the worst point and its sigma vector."""

    def __init__(self, message, point=None, sigmas=None):
        super().__init__(message)
        self.point = point
        self.sigmas = sigmas


class ConvergenceError(HessmixError):
    """An iteration (Jacobi sweep, Newton loop, linear solve) failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegeneracyError(HessmixError):
    """The radial ellipticity coefficient dropped below threshold."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SamplingBudgetError(HessmixError):
    """Rejection sampling exceeded its budget."""


class VerificationError(HessmixError):
    """An asserted a-priori bound failed; names the bound and the worst point."""

    def __init__(self, message, bound=None, worst=None, report=None):
        super().__init__(message)
        self.bound = bound
        self.worst = worst
        self.report = report


class ContinuationError(HessmixError):
    """A solve inside an epsilon-continuation failed; carries partial results."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(HessmixError):
    """Invalid or unknown configuration input."""

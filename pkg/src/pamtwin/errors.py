"""Exception hierarchy. CLI exit codes: validation errors -> 2, numerical failures -> 3."""


class PamTwinError(Exception):
    """Base class for all package errors."""


class ValidationError(PamTwinError):
    """Bad user input: config files, CLI arguments, scenario definitions."""

    exit_code = 2


class ConfigError(ValidationError):
    pass


class CalibrationError(ValidationError):
    pass


class NumericalError(PamTwinError):
    """Runtime numerical failure: divergence, non-convergence, degeneracy."""

    exit_code = 3


class DomainError(NumericalError):
    """Model evaluated outside its validity region (e.g. diverged estimate)."""


class StepFailure(NumericalError):
    """Integration produced non-finite values."""


class ConvergenceError(NumericalError):
    """Iteration hit its budget without settling."""


class DegenerateCovariance(NumericalError):
    """Covariance factorization failed even after jitter retries."""

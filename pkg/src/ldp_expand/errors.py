"""Exception types shared across the package."""


class LdpExpandError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LdpExpandError):
    """Config file violates the schema (unknown key, bad type, bad value)."""


class ModelValidationError(LdpExpandError):
    """A model spec violates an invariant required by the requested operation."""


class GridResolutionError(LdpExpandError):
    """The grid is too coarse to resolve the model fields or the drift."""


class SemigroupOverflowError(LdpExpandError):
    """exp(t*G) would overflow; advises time-splitting or log-domain mode."""


class DegenerateSpectrumError(LdpExpandError):
    """Top of the spectrum is not a simple, isolated eigenvalue."""


class AdmissibleRangeError(LdpExpandError):
    """Requested tail slope lies outside the admissible open interval."""


class ConvergenceError(LdpExpandError):
    """An iterative refinement failed to meet its tolerance."""


class FitError(LdpExpandError):
    """Coefficient fit is ill-conditioned or inconsistent with the analytic check."""


class SolvabilityError(LdpExpandError):
    """Poisson problem for the corrector is not solvable at tolerance."""


class AdmissibilityError(LdpExpandError):
    """Test function does not satisfy the decay admissibility requirement."""


class SampleSizeError(LdpExpandError):
    """Monte Carlo diagnostics indicate too few effective samples."""

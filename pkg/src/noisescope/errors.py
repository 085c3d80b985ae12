"""Exception types shared across the package."""


class NoiseScopeError(Exception):
    """Base class for all package errors."""


class ValidationError(NoiseScopeError):
    """Input data or configuration violates a documented invariant."""


class DomainError(NoiseScopeError):
    """A quantity was requested outside its mathematical domain."""


class ResolutionError(NoiseScopeError):
    """A sampling step is too coarse (or incommensurate) for the request."""


class ConfigurationError(NoiseScopeError):
    """A pulse-sequence configuration is physically inconsistent."""


class CutoffError(NoiseScopeError):
    """A series cutoff is too small for the requested tolerance.

    Carries ``suggested_cutoff``, the smallest odd cutoff estimated to
    satisfy the tolerance.
    """

    def __init__(self, message, suggested_cutoff=None):
        super().__init__(message)
        self.suggested_cutoff = suggested_cutoff


class FitError(NoiseScopeError):
    """A nonlinear fit failed to converge.  Carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(NoiseScopeError):
    """Too few data points for the requested fit."""


class TruncationWarning(UserWarning):
    """A quadrature grid may be truncating a non-negligible integrand tail."""


class ResamplingWarning(UserWarning):
    """Inputs on incompatible grids were resampled by interpolation."""


class EmptyResultWarning(UserWarning):
    """An operation produced an empty or partially empty result."""

"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
failures onto its exit-status contract without a lookup table.
"""

from __future__ import annotations


class CtpredictError(Exception):
    exit_code = 1

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigurationError(CtpredictError, ValueError):
    """Bad grid, bad configuration key or incompatible grids."""


class ValidationError(CtpredictError, ValueError):
    """Input data violates a model invariant (negative density, asymmetry...)."""


class UsageError(CtpredictError, ValueError):
    """Operations were combined in a way that makes no sense."""


class DomainError(CtpredictError, ValueError):
    """Argument outside the domain of the operation (e.g. a non-positive lag)."""


class TruncationError(CtpredictError):
    """A covariance has not decayed inside the truncation window."""


class RegularityError(CtpredictError):
    """The density fails the Szegő condition; no outer factor exists."""

    exit_code = 2


class FactorizationError(CtpredictError):
    """Neither phase orientation produced an anticausal kernel."""


class DegenerateDensityError(CtpredictError):
    """Every frequency sample is masked."""


class InsufficientDataError(CtpredictError):
    """A path is too short for the requested edge margins."""


class WindowError(CtpredictError):
    """Innovations do not cover the support of a predictor kernel."""


class IllConditionedError(CtpredictError):
    """Normal equations stayed ill-conditioned through the jitter schedule."""

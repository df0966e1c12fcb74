"""
Exception types raised by the toolkit.

Every failure derives from PpsfError so callers (and the CLI) can separate
modelling failures from programming errors. Errors carry their diagnostics as
attributes rather than only in the message.
"""

from typing import Any, Dict, Optional


class PpsfError(Exception):
    """Base class for all toolkit failures."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})


class InputError(PpsfError, ValueError):
    """Invalid configuration, arguments or input files."""


class DomainError(PpsfError, ValueError):
    """Wavelength outside a material model's valid range, or at a resonance pole."""


class CutoffError(PpsfError):
    """No guided LP01 solution exists."""


class NumericalError(PpsfError):
    """A root bracket or numerical inversion could not be established."""


class NotFoundError(PpsfError):
    """A sought root (e.g. a zero-dispersion wavelength) is absent from the bracket."""


class CalibrationError(PpsfError):
    """Calibration found no root in its physical bracket."""


class UnboundedBandwidthError(PpsfError):
    """Half maximum is never crossed inside the sampled grid."""


class DipFitError(PpsfError):
    """Least-squares dip fit did not converge."""


class NoDipError(PpsfError):
    """Scan depth is indistinguishable from noise."""


class IllPosedError(PpsfError):
    """Measurement settings do not span the two-qubit operator space."""

    def __init__(self, message: str, null_dimension: int):
        super().__init__(message, {"null_dimension": null_dimension})
        self.null_dimension = null_dimension


class NonConvergenceError(PpsfError):
    """Maximum-likelihood search hit its evaluation cap."""

    def __init__(self, message: str, best: Any = None, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message, diagnostics)
        self.best = best


class ReliabilityError(PpsfError):
    """Too many Monte-Carlo resamples were excluded."""

    def __init__(self, message: str, excluded: int, total: int):
        super().__init__(message, {"excluded": excluded, "total": total})
        self.excluded = excluded
        self.total = total


class InvalidStateError(PpsfError, ValueError):
    """Density matrix violates positivity beyond the numerical floor."""

"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PhotonStatError`; the CLI maps the three families below onto its
exit codes (validation 2, runtime 3, I/O 4).
"""


class PhotonStatError(Exception):
    """Base class for all package errors."""


# -- validation family (exit code 2) ---------------------------------------

class ValidationError(PhotonStatError, ValueError):
    """An input or configuration violates a stated invariant."""


class ParseError(ValidationError):
    """A configuration or data file could not be parsed."""


class ConfigError(ValidationError):
    """Mode, train and trace geometry are mutually inconsistent."""


class GeometryError(ValidationError):
    """Trace length, sample spacing or lag grid do not match."""


class DomainError(ValidationError):
    """A scalar argument lies outside its mathematical domain."""


class WindowError(ValidationError):
    """A pulse window falls outside the trace."""


class RegimeError(ValidationError):
    """E_J/E_C fell below the transmon-validity floor."""


class UnreachableError(ValidationError):
    """A requested transition frequency cannot be reached by flux tuning."""


class TruncationError(ValidationError):
    """The wavepacket window is too short to hold the emitted photon."""


class UnderdeterminedError(ValidationError):
    """Not enough data points to identify the model parameters."""


class DegenerateData(ValidationError):
    """The data carry no information about the model (e.g. no resonance)."""


# -- runtime family (exit code 3) ------------------------------------------

class InsufficientData(PhotonStatError, RuntimeError):
    """Too few shots or batches to form an estimate."""


class NoConvergence(PhotonStatError, RuntimeError):
    """A nonlinear fit did not converge."""

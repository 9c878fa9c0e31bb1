"""Exception types raised by echolab."""


class EcholabError(Exception):
    """Base class for all echolab errors."""


class DegenerateAnharmonicity(EcholabError):
    """The linearised level-spacing slope is not positive, so no finite revival exists."""


class InvalidParity(EcholabError, ValueError):
    """A ladder offset ``j`` does not share the parity of the moment order ``p``."""


class BoundaryViolation(EcholabError):
    """Wavefunction amplitude reached the edge of the grid."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class NormDrift(EcholabError):
    """Norm of the propagated state left the allowed band."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class ResolutionExceeded(EcholabError):
    """Requested harmonic eigenfunctions are not resolvable on the grid."""


class WindowOutOfRange(EcholabError):
    """Measurement window is not covered by the time series."""


class NonPositiveData(EcholabError, ValueError):
    """Power-law fit received non-positive values."""


class NoOverlap(EcholabError):
    """Two time series do not share a time range."""


class UnknownPreset(EcholabError, KeyError):
    """No preset with the requested name."""


class ConfigError(EcholabError, ValueError):
    """A run configuration failed validation."""

"""Exception hierarchy shared by all wavecg modules."""


class WavecgError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WavecgError, ValueError):
    """Invalid user-supplied configuration (kernel modes, grid sizes, CLI keys)."""


class DomainError(WavecgError, ValueError):
    """Argument outside the analytic domain of a symbol (e.g. Re lambda too small)."""


class PoleError(WavecgError, ArithmeticError):
    """Evaluation requested at (or numerically on top of) a pole."""


class DiffusivityZeroError(WavecgError, ArithmeticError):
    """The complex diffusivity vanishes at the requested frequency."""


class PropertyViolation(WavecgError, RuntimeError):
    """A proven inequality failed on sampled data; signals a bug or invalid kernel."""


class AssemblyError(WavecgError, RuntimeError):
    """Discrete operator failed a structural self-check during assembly."""


class SingularShiftError(WavecgError, RuntimeError):
    """Shifted solve hit (numerically) an eigenvalue of the discrete generator."""

    def __init__(self, message, nearest=None):
        super().__init__(message)
        self.nearest = nearest


class NearSpectrumError(WavecgError, RuntimeError):
    """Semi-analytic 2x2 interface system is numerically singular."""

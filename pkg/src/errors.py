"""
Exceptions raised by the recovery library.

Input, shape and file problems subclass ValueError; numerical failures subclass
RuntimeError; output problems subclass OSError. The entry point maps each
family onto an exit code.
"""

from typing import Optional


class RecoveryError(Exception):
    """Base class for every error raised by the recovery package."""


class InvalidSizeError(RecoveryError, ValueError):
    """Signal length or rank outside the admissible range."""


class ShapeMismatchError(RecoveryError, ValueError):
    """Operand dimensions do not match the Hankel shape."""


class InvalidParamsError(RecoveryError, ValueError):
    """RecoveryParams violate their invariants."""


class InvalidInputError(RecoveryError, ValueError):
    """Degenerate input (zero signal, zero spectral estimates)."""


class InvalidSpecError(RecoveryError, ValueError):
    """Corruption, noise or experiment specification is inconsistent."""


class InfeasibleSeparationError(InvalidSpecError):
    """Rejection sampling could not meet the requested frequency separation."""


class LanczosConvergenceError(RecoveryError, RuntimeError):
    """
    Lanczos bidiagonalization hit its iteration cap.

    The best available factorization is kept on ``best`` so callers can decide
    whether to continue with it.
    """

    def __init__(self, message: str, best=None, residual: Optional[float] = None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class NumericalBreakdownError(RecoveryError, RuntimeError):
    """A NaN or Inf appeared in the iterates."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class SignalFileError(RecoveryError, ValueError):
    """A signal file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class OutputPathError(RecoveryError, OSError):
    """The output location is not writable."""

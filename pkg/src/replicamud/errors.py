"""Exception types shared across the solvers."""

from __future__ import annotations


class ConvergenceError(RuntimeError):
    """Raised when a damped fixed-point iteration fails to converge.

    Carries the last iterate and its residual so callers can inspect how
    close the iteration got before giving up.
    """

    def __init__(self, message: str, state=None, residual: float | None = None):
        super().__init__(message)
        self.state = state
        self.residual = residual


class ResourceLimitError(RuntimeError):
    """Raised when a request exceeds a hard computational budget.

    Distinct from ``ValueError`` so callers can tell "this input is
    malformed" apart from "this input is valid but too big to enumerate".
    """

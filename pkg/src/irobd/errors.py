"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class InvalidArgument(ValueError):
    """Malformed input: wrong dimensions, out-of-domain parameters, bad files."""


class Unsupported(InvalidArgument):
    """The request is well formed but outside what a routine can handle."""


class SolverFailure(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, last_iterate: np.ndarray | None = None,
                 residual: float = float("nan"), step: int | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.step = step


class ProtocolViolation(RuntimeError):
    """An online algorithm tried to read information not yet revealed."""


class UnboundedRatio(ArithmeticError):
    """The comparator paid zero while the algorithm paid something."""


class VerificationFailure(AssertionError):
    """A checked identity or inequality did not hold."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step

"""Exceptions and input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class TraceParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleError(RuntimeError):
    """A synthesis step has no policy satisfying the quality budget."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


def check_row_stochastic(P, name="P", atol=1e-12):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(P < 0):
        raise ValidationError(f"{name} has negative entries")
    sums = P.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        worst = int(np.argmax(np.abs(sums - 1.0)))
        raise ValidationError(f"row {worst} of {name} sums to {sums[worst]!r}, not 1")
    return P


def check_distribution(p, name="distribution", atol=1e-9):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if np.any(p < -atol) or not np.all(np.isfinite(p)):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def check_times(times, name):
    times = [int(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError(f"{name} must be strictly increasing, got {times}")
    return tuple(times)


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be a finite non-negative number, got {value!r}")
    return value

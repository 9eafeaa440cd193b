"""Small input-checking helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .errors import UnderdeterminedError, ValidationError


def as_real_1d(x, name: str) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {a.shape}")
    if np.iscomplexobj(a):
        raise ValidationError(f"{name} must be real")
    a = a.astype(float)
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite values")
    return a


def as_complex_1d(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=complex)
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite values")
    return a


def check_lengths(*arrays: np.ndarray) -> int:
    n = {a.shape[0] for a in arrays}
    if len(n) != 1:
        raise ValidationError(f"inputs have inconsistent lengths {sorted(n)}")
    return n.pop()


def check_min_points(n: int, need: int, what: str) -> None:
    if n < need:
        raise UnderdeterminedError(f"{what} needs at least {need} points, got {n}")


def split_pairs(data, y, complex_y: bool = False):
    """Accept either ``(x, y)`` arrays or a single sequence of ``(x, y)`` pairs."""
    if y is None:
        pairs = list(data)
        if not pairs:
            raise UnderdeterminedError("no data points")
        x = [p[0] for p in pairs]
        y = [p[1] for p in pairs]
    else:
        x = data
    x = as_real_1d(x, "x")
    y = as_complex_1d(y, "y") if complex_y else as_real_1d(y, "y")
    check_lengths(x, y)
    return x, y

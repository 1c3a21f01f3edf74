"""Fundamental solutions of the Laplacian in two and three dimensions.

All functions accept single points (shape ``(d,)``) or broadcastable stacks of
points (shape ``(..., d)``); the last axis always holds coordinates.
"""

import numpy as np

R_MIN = 1e-12


class CoincidentPointsError(ValueError):
    """Raised when a kernel is evaluated at (numerically) coincident points."""


def _difference(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    d = x.shape[-1]
    if d not in (2, 3):
        raise ValueError(f"only d=2 and d=3 are supported, got d={d}")
    diff = x - y
    r2 = np.einsum("...i,...i->...", diff, diff)
    if np.any(r2 < R_MIN * R_MIN):
        raise CoincidentPointsError("kernel evaluated at coincident points")
    return diff, r2, d


def fundamental_solution(x, y):
    """G(x, y) = -log(r)/(2 pi) in 2D, 1/(4 pi r) in 3D."""
    _, r2, d = _difference(x, y)
    if d == 2:
        return -0.25 / np.pi * np.log(r2)
    return 0.25 / (np.pi * np.sqrt(r2))


def grad_y_fundamental(x, y):
    """Gradient of :func:`fundamental_solution` with respect to ``y``.

    Returns ``(x - y) / (2 pi r^2)`` in 2D and ``(x - y) / (4 pi r^3)`` in 3D.
    """
    diff, r2, d = _difference(x, y)
    if d == 2:
        scale = 0.5 / (np.pi * r2)
    else:
        scale = 0.25 / (np.pi * r2 * np.sqrt(r2))
    return diff * scale[..., None]


def normal_derivative_g(x, y, n_y, check_unit=True):
    """Derivative of G(x, y) along the unit normal ``n_y`` at ``y``."""
    n_y = np.asarray(n_y, dtype=np.float64)
    if check_unit:
        norms = np.linalg.norm(n_y, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("normal vector must have unit length")
    return np.einsum("...i,...i->...", grad_y_fundamental(x, y), n_y)

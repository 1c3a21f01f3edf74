"""Finite-difference reference solver for the 2D Dirichlet problem
``laplace(u) = f`` on a box, plus grid interpolation and error metrics."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import FieldGrid
from .geometry import BoxDomain
from .pibi import PointSourceSet


class SolverError(RuntimeError):
    """The linear solve did not converge."""


@dataclass
class DirichletProblem:
    domain: BoxDomain
    boundary_fn: Callable
    sources: PointSourceSet = field(default_factory=PointSourceSet.empty)
    source_mode: str = "bilinear"
    sigma: float = 1e-3


def eq15_boundary(x, tol=1e-9):
    """Boundary data of the Laplace benchmark on [-1, 1]^2.

    ``sin(2.5 pi x2)`` on the vertical sides, -1 at the bottom and +1 at the
    top.  At the corners both rules agree.
    """
    x1, x2 = float(x[0]), float(x[1])
    if abs(x2 - 1.0) <= tol and -1 - tol <= x1 <= 1 + tol:
        return 1.0
    if abs(x2 + 1.0) <= tol and -1 - tol <= x1 <= 1 + tol:
        return -1.0
    if (abs(x1 - 1.0) <= tol or abs(x1 + 1.0) <= tol) and -1 - tol <= x2 <= 1 + tol:
        return float(np.sin(2.5 * np.pi * x2))
    raise ValueError(f"point {x} is not on the boundary of [-1, 1]^2")


def gaussian_delta(x, center, sigma):
    """Normalised isotropic Gaussian density in ``d`` dimensions."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    d = x.shape[-1]
    r2 = np.sum((x - center) ** 2, axis=-1)
    return np.exp(-0.5 * r2 / sigma**2) / (2.0 * np.pi * sigma**2) ** (d / 2)


def discretize_sources(sources, grid, mode="bilinear", sigma=1e-3):
    """Right-hand side of ``laplace(u) = sum c_i delta(x - y_i)`` on ``grid``.

    ``bilinear`` splits each magnitude over the four surrounding nodes with
    bilinear weights and divides by ``spacing**2`` (unit discrete mass);
    ``gaussian`` samples a normalised Gaussian of width ``sigma``.
    """
    rhs = np.zeros(grid.shape)
    h = grid.spacing
    origin = np.asarray(grid.origin)
    upper = np.asarray(grid.upper)
    for loc, c in zip(sources.locations, sources.magnitudes):
        if np.any(loc < origin - 1e-12) or np.any(loc > upper + 1e-12):
            raise ValueError(f"source at {loc} lies outside the grid")
        if mode == "bilinear":
            s = (loc - origin) / h
            base = np.minimum(np.floor(s).astype(int), np.array(grid.shape) - 2)
            f = s - base
            i, j = base
            rhs[i, j] += c * (1 - f[0]) * (1 - f[1]) / h**2
            rhs[i + 1, j] += c * f[0] * (1 - f[1]) / h**2
            rhs[i, j + 1] += c * (1 - f[0]) * f[1] / h**2
            rhs[i + 1, j + 1] += c * f[0] * f[1] / h**2
        elif mode == "gaussian":
            rhs += c * gaussian_delta(grid.nodes(), loc, sigma)
        else:
            raise ValueError(f"unknown source discretisation {mode!r}")
    return rhs


def _neg_laplacian(v, h):
    """-Laplacian (5-point) of interior values with zero Dirichlet padding."""
    p = np.pad(v, 1)
    return (4.0 * v - p[:-2, 1:-1] - p[2:, 1:-1] - p[1:-1, :-2] - p[1:-1, 2:]) / h**2


def conjugate_gradient(apply, b, rtol=1e-10, max_iter=None):
    """Plain conjugate gradient for a symmetric positive-definite operator."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = np.vdot(r, r)
    bnorm = np.sqrt(np.vdot(b, b))
    if bnorm == 0.0:
        return x
    max_iter = max_iter or 10 * b.size
    for _ in range(max_iter):
        if np.sqrt(rr) <= rtol * bnorm:
            return x
        ap = apply(p)
        alpha = rr / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = np.vdot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    if np.sqrt(rr) > rtol * bnorm:
        raise SolverError(f"CG did not reach relative residual {rtol} in {max_iter} iterations")
    return x


def solve_dirichlet(problem, spacing, rtol=1e-10):
    """Five-point finite-difference solution on a grid of the given spacing."""
    domain = problem.domain
    if domain.dim != 2:
        raise ValueError("the finite-difference solver is two-dimensional")
    grid = FieldGrid.covering(domain.lower, domain.upper, spacing)
    n1, n2 = grid.shape
    if n1 < 3 or n2 < 3:
        raise ValueError("grid has no interior nodes")
    h = grid.spacing
    nodes = grid.nodes()
    u = np.zeros(grid.shape)
    for i in range(n1):
        for j in (0, n2 - 1):
            u[i, j] = problem.boundary_fn(nodes[i, j])
    for j in range(n2):
        for i in (0, n1 - 1):
            u[i, j] = problem.boundary_fn(nodes[i, j])
    if not np.all(np.isfinite(u)):
        raise ValueError("boundary data must be finite")

    f = discretize_sources(problem.sources, grid, problem.source_mode, problem.sigma)
    # move known boundary values to the right-hand side: -L u_int = -f + boundary terms
    b = -f[1:-1, 1:-1].copy()
    b[0, :] += u[0, 1:-1] / h**2
    b[-1, :] += u[-1, 1:-1] / h**2
    b[:, 0] += u[1:-1, 0] / h**2
    b[:, -1] += u[1:-1, -1] / h**2
    interior = conjugate_gradient(lambda v: _neg_laplacian(v, h), b, rtol)
    u[1:-1, 1:-1] = interior
    return grid.with_values(u)


def interpolate(grid, x):
    """Bilinear interpolation at one point (scalar) or points ``(n, 2)``.

    Returns NaN where any of the four surrounding nodes is masked.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    origin = np.asarray(grid.origin)
    s = (xs - origin) / grid.spacing
    shape = np.array(grid.shape)
    tol = 1e-9
    if np.any(s < -tol) or np.any(s > shape - 1 + tol):
        raise ValueError("interpolation point outside the grid")
    s = np.clip(s, 0, shape - 1)
    base = np.minimum(np.floor(s).astype(int), np.maximum(shape - 2, 0))
    f = s - base
    i, j = base[:, 0], base[:, 1]
    i1 = np.minimum(i + 1, shape[0] - 1)
    j1 = np.minimum(j + 1, shape[1] - 1)
    v = grid.values
    out = (v[i, j] * (1 - f[:, 0]) * (1 - f[:, 1]) + v[i1, j] * f[:, 0] * (1 - f[:, 1])
           + v[i, j1] * (1 - f[:, 0]) * f[:, 1] + v[i1, j1] * f[:, 0] * f[:, 1])
    m = grid.mask
    masked = m[i, j] | m[i1, j] | m[i, j1] | m[i1, j1]
    out = np.where(masked, np.nan, out)
    return float(out[0]) if single else out


def resample(grid, target):
    """Interpolate ``grid`` onto the nodes of ``target``; NaN results become masked."""
    values = interpolate(grid, target.nodes().reshape(-1, 2)).reshape(target.shape)
    mask = np.isnan(values)
    return target.with_values(np.where(mask, 0.0, values), mask)


def mae(field_a, field_b):
    """Mean absolute difference over nodes unmasked in both fields."""
    if not field_a.congruent(field_b):
        raise ValueError("fields are defined on different grids")
    keep = ~(field_a.mask | field_b.mask)
    if not np.any(keep):
        raise ValueError("every node is masked")
    return float(np.mean(np.abs(field_a.values[keep] - field_b.values[keep])))


def max_abs_error(field_a, field_b):
    if not field_a.congruent(field_b):
        raise ValueError("fields are defined on different grids")
    keep = ~(field_a.mask | field_b.mask)
    return float(np.max(np.abs(field_a.values[keep] - field_b.values[keep])))

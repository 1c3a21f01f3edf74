"""Axis-aligned box domains and uniform boundary quadrature."""

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]`` in 2 or 3 dimensions."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper):
            raise ValueError("lower and upper corners have different dimensions")
        if len(lower) not in (2, 3):
            raise ValueError(f"only d=2 and d=3 are supported, got d={len(lower)}")
        if not all(np.isfinite(lower + upper)):
            raise ValueError("box corners must be finite")
        if any(lo >= up for lo, up in zip(lower, upper)):
            raise ValueError(f"degenerate box: lower={lower}, upper={upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def square(cls, half_width=1.0, d=2):
        return cls((-half_width,) * d, (half_width,) * d)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lengths(self):
        return np.subtract(self.upper, self.lower)

    @property
    def center(self):
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, x, strict=True, tol=0.0):
        """Vectorised membership test on the last axis of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        lo = np.asarray(self.lower) + tol
        up = np.asarray(self.upper) - tol
        if strict:
            return np.all((x > lo) & (x < up), axis=-1)
        return np.all((x >= lo) & (x <= up), axis=-1)

    def distance_to_boundary(self, x):
        """Signed distance to the nearest face (positive inside)."""
        x = np.asarray(x, dtype=np.float64)
        return np.minimum(x - np.asarray(self.lower), np.asarray(self.upper) - x).min(axis=-1)

    def on_boundary(self, x, tol=1e-12):
        x = np.asarray(x, dtype=np.float64)
        inside = self.contains(x, strict=False, tol=-tol)
        return inside & (np.abs(self.distance_to_boundary(x)) <= tol)

    def to_dict(self):
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["lower"]), tuple(data["upper"]))


def face_measures(domain):
    """Measures of the 2d faces, ordered (axis 0 low, axis 0 high, axis 1 low, ...)."""
    lengths = domain.lengths
    out = []
    for axis in range(domain.dim):
        m = float(np.prod(np.delete(lengths, axis)))
        out.extend([m, m])
    return np.array(out)


def boundary_measure(domain):
    """Perimeter (d=2) or surface area (d=3) of the box."""
    return float(face_measures(domain).sum())


def enlarge(domain, epsilon):
    """Grow the box by ``epsilon`` on every side."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    return BoxDomain(
        tuple(v - epsilon for v in domain.lower),
        tuple(v + epsilon for v in domain.upper),
    )


class BoundarySample(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    weight: float


@dataclass(frozen=True)
class BoundarySamples:
    """Quadrature nodes on the boundary of a box, stored as arrays.

    ``points`` and ``normals`` have shape ``(I, d)``; ``weights`` and
    ``faces`` have shape ``(I,)``.  Iterating yields :class:`BoundarySample`.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        for arr in (self.points, self.normals, self.weights, self.faces):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def __iter__(self) -> Iterator[BoundarySample]:
        for p, n, w in zip(self.points, self.normals, self.weights):
            yield BoundarySample(p, n, float(w))

    def translated(self, shift):
        shift = np.asarray(shift, dtype=np.float64)
        return BoundarySamples(self.points + shift, self.normals.copy(),
                               self.weights.copy(), self.faces.copy())


def allocate_counts(measures, count):
    """Split ``count`` over faces proportionally (largest remainder rounding)."""
    measures = np.asarray(measures, dtype=np.float64)
    quota = count * measures / measures.sum()
    counts = np.floor(quota).astype(int)
    remainder = quota - counts
    # stable sort keeps the lowest face index first among equal remainders
    order = np.argsort(-remainder, kind="stable")
    counts[order[: count - counts.sum()]] += 1
    while np.any(counts == 0):
        counts[np.argmax(counts)] -= 1
        counts[np.argmin(counts)] += 1
    return counts


def _equispaced_face(n, lengths):
    """Midpoint-rule positions in the unit cube of the face's free axes."""
    if len(lengths) == 1:
        return ((np.arange(n) + 0.5) / n)[:, None]
    rows = max(1, min(n, int(round(np.sqrt(n * lengths[1] / lengths[0])))))
    per_row = np.full(rows, n // rows)
    per_row[: n % rows] += 1
    pts = []
    for r, k in enumerate(per_row):
        u = (np.arange(k) + 0.5) / k
        pts.append(np.column_stack([u, np.full(k, (r + 0.5) / rows)]))
    return np.vstack(pts)


def sample_boundary(domain, count, mode="equispaced", seed=0):
    """Place ``count`` uniform-weight quadrature nodes on the box boundary.

    Faces receive points in proportion to their measure.  ``equispaced``
    uses midpoint-rule positions (independent of ``seed``); ``random`` draws
    uniformly on each face from ``numpy.random.default_rng(seed)``.
    Every node carries the weight ``V / count`` with ``V`` the boundary measure.
    """
    d = domain.dim
    if count < 2 * d:
        raise ValueError(f"need at least {2 * d} boundary points, got {count}")
    if mode not in ("equispaced", "random"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = np.random.default_rng(seed)
    lower = np.asarray(domain.lower)
    lengths = domain.lengths
    counts = allocate_counts(face_measures(domain), count)

    points, normals, faces = [], [], []
    for face, n in enumerate(counts):
        axis, side = divmod(face, 2)
        free = [k for k in range(d) if k != axis]
        if mode == "equispaced":
            local = _equispaced_face(n, lengths[free])
        else:
            local = rng.random((n, d - 1))
        p = np.empty((n, d))
        p[:, free] = lower[free] + local * lengths[free]
        p[:, axis] = domain.upper[axis] if side else domain.lower[axis]
        normal = np.zeros(d)
        normal[axis] = 1.0 if side else -1.0
        points.append(p)
        normals.append(np.tile(normal, (n, 1)))
        faces.append(np.full(n, face))

    weights = np.full(count, boundary_measure(domain) / count)
    return BoundarySamples(np.vstack(points), np.vstack(normals), weights,
                           np.concatenate(faces))

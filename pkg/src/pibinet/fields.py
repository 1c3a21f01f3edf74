"""Regular 2D grids of scalar values with an optional mask."""

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class FieldGrid:
    """Scalar values on a uniform 2D grid.

    ``values[i, j]`` sits at ``origin + (i * spacing, j * spacing)``, so the
    first array axis runs along ``x1``.  Masked nodes carry no reliable value
    and are skipped by metrics.
    """

    origin: tuple
    spacing: float
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.origin = tuple(float(v) for v in self.origin)
        self.spacing = float(self.spacing)
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.origin) != 2 or self.values.ndim != 2:
            raise ValueError("FieldGrid is two-dimensional")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if min(self.values.shape) < 1:
            raise ValueError("empty grid")
        if self.mask is None:
            self.mask = np.zeros(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ValueError("mask shape does not match values")
        if not np.all(np.isfinite(self.values[~self.mask])):
            raise ValueError("unmasked grid values must be finite")

    @classmethod
    def covering(cls, lower, upper, spacing, fill=0.0):
        """Grid with nodes on ``lower + k * spacing`` spanning ``[lower, upper]``."""
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        steps = (upper - lower) / spacing
        shape = tuple(int(round(s)) + 1 for s in steps)
        if np.any(np.abs(steps - np.round(steps)) > 1e-9):
            raise ValueError(f"spacing {spacing} does not divide the extent {upper - lower}")
        return cls(tuple(lower), spacing, np.full(shape, fill, dtype=np.float64))

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        n1, n2 = self.shape
        return (self.origin[0] + self.spacing * np.arange(n1),
                self.origin[1] + self.spacing * np.arange(n2))

    @property
    def upper(self):
        a1, a2 = self.axes()
        return (a1[-1], a2[-1])

    def nodes(self):
        """Node coordinates, shape ``(n1, n2, 2)``."""
        a1, a2 = self.axes()
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        return np.stack([g1, g2], axis=-1)

    def with_values(self, values, mask=None):
        return FieldGrid(self.origin, self.spacing, values, mask)

    def congruent(self, other, tol=1e-9):
        return (self.shape == other.shape
                and abs(self.spacing - other.spacing) <= tol
                and np.allclose(self.origin, other.origin, atol=tol, rtol=0))


def write_field_csv(grid, path):
    """Write ``x1,x2,value,masked`` rows in row-major order, 17 significant digits."""
    nodes = grid.nodes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "value", "masked"])
        n1, n2 = grid.shape
        for i in range(n1):
            for j in range(n2):
                writer.writerow([f"{nodes[i, j, 0]:.17g}", f"{nodes[i, j, 1]:.17g}",
                                 f"{grid.values[i, j]:.17g}", int(grid.mask[i, j])])


def read_field_csv(path):
    """Inverse of :func:`write_field_csv`; infers origin, spacing and shape."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x1", "x2", "value", "masked"]:
            raise ValueError(f"{path}: expected header x1,x2,value,masked, got {header}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append((float(row[0]), float(row[1]), float(row[2]), int(row[3])))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
    if not rows:
        raise ValueError(f"{path}: no grid nodes")
    data = np.array(rows)
    data = data[np.lexsort((data[:, 1], data[:, 0]))]
    x1 = np.unique(data[:, 0])
    x2 = np.unique(data[:, 1])
    n1, n2 = len(x1), len(x2)
    if n1 * n2 != len(data):
        raise ValueError(f"{path}: nodes do not form a full grid")
    spacing = (x1[-1] - x1[0]) / (n1 - 1) if n1 > 1 else (x2[-1] - x2[0]) / (n2 - 1)
    values = data[:, 2].reshape(n1, n2)
    mask = data[:, 3].reshape(n1, n2).astype(bool)
    return FieldGrid((x1[0], x2[0]), spacing, values, mask)

"""Synthetic benchmark scenarios and the CSV formats for measurements and wells."""

import csv
from dataclasses import dataclass

import numpy as np

from .fd_solver import DirichletProblem, eq15_boundary, interpolate, solve_dirichlet
from .geometry import BoxDomain
from .pibi import PointSourceSet
from .training import Dataset

SCENARIOS = ("laplace_eq15", "poisson_random_sources")
REGIONS = ("theta_ring", "full_omega")
RING_INNER = 0.6
OUTLIER_VALUE = 2.0


@dataclass
class Scenario:
    """Generated benchmark instance: data, reference field and true sources."""

    data: Dataset
    truth: object  # FieldGrid
    sources: PointSourceSet
    info: dict


def sample_region(region, count, rng, domain=None):
    """Uniform points in the open square or in the ring outside [-0.6, 0.6]^2."""
    domain = domain or BoxDomain.square()
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    if region == "full_omega":
        return rng.uniform(lo, hi, size=(count, 2))
    if region != "theta_ring":
        raise ValueError(f"unknown sampling region {region!r}")
    out = np.empty((0, 2))
    while len(out) < count:
        cand = rng.uniform(lo, hi, size=(2 * count, 2))
        keep = np.any(np.abs(cand) > RING_INNER, axis=1)
        out = np.vstack([out, cand[keep]])
    return out[:count]


def generate(scenario="laplace_eq15", region="theta_ring", n=50, seed=0, noise_std=0.2,
             fd_spacing=0.2, n_sources=5, magnitude_range=5.0, outlier=None,
             source_mode="bilinear", boundary_fn=None):
    """Build a noisy measurement set from a finite-difference reference.

    Laplace scenarios use the ``sin(2.5 pi x2)`` / -1 / +1 boundary data (or
    ``boundary_fn``) and get an extra center point of value 2 unless
    ``outlier`` is False.  Poisson scenarios draw ``n_sources`` sources in the
    square with magnitudes in U(-5, 5) on top of zero boundary data.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    if region not in REGIONS:
        raise ValueError(f"unknown sampling region {region!r}")
    rng = np.random.default_rng(seed)
    domain = BoxDomain.square()
    if scenario == "laplace_eq15":
        sources = PointSourceSet.empty()
        boundary = boundary_fn or eq15_boundary
        add_outlier = True if outlier is None else outlier
    else:
        locations = rng.uniform(-1.0, 1.0, size=(n_sources, 2))
        magnitudes = rng.uniform(-magnitude_range, magnitude_range, size=n_sources)
        sources = PointSourceSet(locations, magnitudes)
        boundary = boundary_fn or (lambda x: 0.0)
        add_outlier = bool(outlier)
    truth = solve_dirichlet(DirichletProblem(domain, boundary, sources, source_mode), fd_spacing)
    points = sample_region(region, n, rng)
    values = interpolate(truth, points)
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, size=n)
    if add_outlier:
        points = np.vstack([points, [0.0, 0.0]])
        values = np.append(values, OUTLIER_VALUE)
    info = {
        "scenario": scenario, "region": region, "n": n, "seed": seed,
        "noise_std": noise_std, "fd_spacing": fd_spacing, "outlier": add_outlier,
        "source_mode": source_mode,
        # the point-source potential c G(x, y) solves laplace(u) = -c delta,
        # so a fitted model reports the negated right-hand-side magnitudes
        "rhs_sources": sources.to_dict(),
        "model_sources": PointSourceSet(sources.locations, -sources.magnitudes).to_dict(),
    }
    return Scenario(Dataset(points, values), truth, sources, info)


def write_measurements(data, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "u"])
        for (x1, x2), u in zip(data.points, data.values):
            writer.writerow([f"{x1:.17g}", f"{x2:.17g}", f"{u:.17g}"])


def read_measurements(path):
    points, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x1", "x2", "u"]:
            raise ValueError(f"{path}:1: expected header x1,x2,u, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x1, x2, u = (float(v) for v in row)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
            points.append((x1, x2))
            values.append(u)
    if not values:
        raise ValueError(f"{path}: no measurements")
    return Dataset(np.array(points), np.array(values))


@dataclass
class WellRecord:
    id: str
    x: float
    y: float
    head: float


def read_wells(path):
    wells, seen = [], set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "x", "y", "head"]:
            raise ValueError(f"{path}:1: expected header id,x,y,head, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rec = WellRecord(row[0], float(row[1]), float(row[2]), float(row[3]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if not np.all(np.isfinite([rec.x, rec.y, rec.head])):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if rec.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate well id {rec.id!r}")
            seen.add(rec.id)
            wells.append(rec)
    return wells


def write_wells(wells, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "x", "y", "head"])
        for w in wells:
            writer.writerow([w.id, f"{w.x:.17g}", f"{w.y:.17g}", f"{w.head:.17g}"])

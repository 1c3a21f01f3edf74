"""Boundary-integral network model: Monte Carlo representation formula plus
point-source potentials."""

from dataclasses import dataclass, field

import numpy as np

from .fields import FieldGrid
from .geometry import BoxDomain, BoundarySamples, enlarge, sample_boundary
from .kernels import CoincidentPointsError, fundamental_solution, grad_y_fundamental, normal_derivative_g
from .network import MlpParams, default_layer_sizes, forward, init_params, jet

# evaluation points closer than this to a quadrature node are rejected
SAMPLE_CLEARANCE = 1e-9


class DomainError(ValueError):
    """A point lies outside the region where an evaluation is defined."""


@dataclass
class PointSourceSet:
    """``M`` point sources with locations ``(M, d)`` and magnitudes ``(M,)``."""

    locations: np.ndarray
    magnitudes: np.ndarray
    trainable_locations: bool = False
    trainable_magnitudes: bool = False

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64).reshape(-1)
        locations = np.asarray(self.locations, dtype=np.float64)
        if locations.ndim != 2:
            locations = locations.reshape(len(self.magnitudes), -1) if len(self.magnitudes) else np.zeros((0, 2))
        self.locations = locations
        if len(self.locations) != len(self.magnitudes):
            raise ValueError("locations and magnitudes differ in length")
        if not (np.all(np.isfinite(self.locations)) and np.all(np.isfinite(self.magnitudes))):
            raise ValueError("source parameters must be finite")

    @classmethod
    def empty(cls, d=2):
        return cls(np.zeros((0, d)), np.zeros(0))

    def __len__(self):
        return len(self.magnitudes)

    @property
    def trainable(self):
        return len(self) > 0 and (self.trainable_locations or self.trainable_magnitudes)

    def copy(self):
        return PointSourceSet(self.locations.copy(), self.magnitudes.copy(),
                              self.trainable_locations, self.trainable_magnitudes)

    def union(self, other):
        return PointSourceSet(np.vstack([self.locations, other.locations]),
                              np.concatenate([self.magnitudes, other.magnitudes]),
                              self.trainable_locations, self.trainable_magnitudes)

    def check_inside(self, domain):
        if len(self) and not np.all(domain.contains(self.locations)):
            raise DomainError("point sources must lie strictly inside the data domain")

    def to_dict(self):
        return {
            "locations": self.locations.tolist(),
            "magnitudes": self.magnitudes.tolist(),
            "trainable_locations": self.trainable_locations,
            "trainable_magnitudes": self.trainable_magnitudes,
        }

    @classmethod
    def from_dict(cls, data, d=2):
        locations = np.asarray(data.get("locations", []), dtype=np.float64).reshape(-1, d)
        return cls(locations, data.get("magnitudes", []),
                   bool(data.get("trainable_locations", False)),
                   bool(data.get("trainable_magnitudes", False)))


def init_sources(count, domain, seed=0, guesses=None, trainable_locations=True,
                 trainable_magnitudes=True):
    """Initial guesses for ``count`` unknown sources.

    Magnitudes are drawn from U(-0.5, 0.5) so that location gradients do not
    vanish; locations come from ``guesses`` when given, otherwise uniformly
    from the central half of ``domain``.
    """
    rng = np.random.default_rng(seed)
    magnitudes = rng.uniform(-0.5, 0.5, size=count)
    if guesses is not None:
        locations = np.asarray(guesses, dtype=np.float64).reshape(count, domain.dim)
    else:
        half = 0.25 * domain.lengths
        locations = rng.uniform(domain.center - half, domain.center + half, size=(count, domain.dim))
    return PointSourceSet(locations, magnitudes, trainable_locations, trainable_magnitudes)


def source_potential(sources, x):
    """Sum of ``c_i G(x, y_i)`` at one point (scalar) or a stack of points."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if len(sources) == 0:
        out = np.zeros(len(xs))
    else:
        try:
            g = fundamental_solution(xs[:, None, :], sources.locations[None, :, :])
        except CoincidentPointsError as exc:
            raise CoincidentPointsError("source potential evaluated at a source location") from exc
        out = g @ sources.magnitudes
    return float(out[0]) if single else out


def layer_matrices(x, samples):
    """Quadrature matrices of the single and double layer potentials.

    Returns ``(single, double)`` of shape ``(n, I)`` with
    ``single[i, j] = w_j G(x_i, y_j)`` and
    ``double[i, j] = w_j dG/dn(x_i, y_j)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    diff = x[:, None, :] - samples.points[None, :, :]
    if np.any(np.einsum("nij,nij->ni", diff, diff) <= SAMPLE_CLEARANCE ** 2):
        raise CoincidentPointsError("evaluation point coincides with a boundary quadrature node")
    y = samples.points[None, :, :]
    single = fundamental_solution(x[:, None, :], y) * samples.weights
    double = normal_derivative_g(x[:, None, :], y, samples.normals[None], check_unit=False) * samples.weights
    return single, double


def represent(x, samples, h, h_normal):
    """Monte Carlo representation formula ``sum_j w_j (G h_n - G_n h)``
    for given boundary values ``h`` and normal derivatives ``h_normal``."""
    single, double = layer_matrices(x, samples)
    return single @ np.asarray(h_normal, float) - double @ np.asarray(h, float)


@dataclass
class PibiModel:
    """Boundary network plus point sources, integrated over a fixed node set.

    ``domain`` is the integration box carrying ``boundary``;
    ``data_domain`` is the (smaller) region the data and sources live in.
    """

    params: MlpParams
    sources: PointSourceSet
    boundary: BoundarySamples
    domain: BoxDomain
    data_domain: BoxDomain
    sampling: dict = field(default_factory=dict)

    @classmethod
    def create(cls, data_domain, params=None, sources=None, integration_points=200,
               mode="equispaced", seed=0, epsilon=0.1, layer_sizes=None):
        domain = enlarge(data_domain, epsilon)
        if params is None:
            params = init_params(layer_sizes or default_layer_sizes(data_domain.dim), seed)
        if sources is None:
            sources = PointSourceSet.empty(data_domain.dim)
        sources.check_inside(data_domain)
        boundary = sample_boundary(domain, integration_points, mode, seed)
        sampling = {"integration_points": integration_points, "mode": mode,
                    "seed": seed, "epsilon": epsilon}
        return cls(params, sources, boundary, domain, data_domain, sampling)

    def boundary_jet(self):
        """Network values and outward normal derivatives at the quadrature nodes."""
        return jet(self.params, self.boundary.points, self.boundary.normals[None])

    def copy(self):
        return PibiModel(self.params.copy(), self.sources.copy(), self.boundary,
                         self.domain, self.data_domain, dict(self.sampling))

    def to_dict(self):
        return {
            "kind": "pibi",
            "domain": self.domain.to_dict(),
            "data_domain": self.data_domain.to_dict(),
            "sampling": self.sampling,
            "sources": self.sources.to_dict(),
            "network": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        data_domain = BoxDomain.from_dict(data["data_domain"])
        s = data["sampling"]
        model = cls.create(data_domain, MlpParams.from_dict(data["network"]),
                           PointSourceSet.from_dict(data["sources"], data_domain.dim),
                           s["integration_points"], s["mode"], s["seed"], s["epsilon"])
        return model


def _interior_points(model, x):
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if xs.shape[-1] != model.domain.dim:
        raise ValueError("dimension mismatch")
    if not np.all(model.domain.contains(xs)):
        raise DomainError("evaluation point is not strictly inside the integration box")
    return xs


def boundary_integral(model, x):
    """Layer-potential part of the representation (no sources, no jump term)."""
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    bj = model.boundary_jet()
    return represent(xs, model.boundary, bj.value, bj.first[0])


def evaluate_interior(model, x):
    """Reconstructed solution at interior point(s) of the integration box."""
    single = np.ndim(x) == 1
    xs = _interior_points(model, x)
    u = boundary_integral(model, xs) + source_potential(model.sources, xs)
    return float(u[0]) if single else u


def evaluate_boundary(model, x, tol=1e-9):
    """Reconstructed solution on the integration boundary (adds ``h/2``)."""
    single = np.ndim(x) == 1
    xs = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.all(model.domain.on_boundary(xs, tol)):
        raise DomainError("point is not on the integration boundary")
    u = boundary_integral(model, xs) + 0.5 * forward(model.params, xs) + source_potential(model.sources, xs)
    return float(u[0]) if single else u


def evaluate_field(model, grid):
    """Evaluate the model at every node of ``grid`` (a :class:`FieldGrid`).

    Nodes that coincide with a point source are masked and carry the value of
    the nearest unmasked node.
    """
    nodes = grid.nodes().reshape(-1, 2)
    if not np.all(model.domain.contains(nodes)):
        raise DomainError("evaluation grid extends beyond the integration box")
    masked = np.zeros(len(nodes), dtype=bool)
    if len(model.sources):
        dist = np.linalg.norm(nodes[:, None, :] - model.sources.locations[None], axis=-1)
        masked = np.any(dist <= SAMPLE_CLEARANCE, axis=1)
    values = np.empty(len(nodes))
    values[~masked] = evaluate_interior(model, nodes[~masked])
    if np.any(masked):
        if np.all(masked):
            raise DomainError("every grid node coincides with a source")
        ok = np.flatnonzero(~masked)
        for k in np.flatnonzero(masked):
            values[k] = values[ok[np.argmin(np.linalg.norm(nodes[ok] - nodes[k], axis=1))]]
    return grid.with_values(values.reshape(grid.shape), masked.reshape(grid.shape))


def gradient_field(grid):
    """Finite-difference gradient of a field: central inside, one-sided at edges.

    Returns two :class:`FieldGrid` objects (d/dx1, d/dx2).  A node is masked
    when it or one of its stencil neighbours is masked.
    """
    if min(grid.shape) < 2:
        raise ValueError("gradient needs at least two nodes along each axis")
    g1, g2 = np.gradient(grid.values, grid.spacing, grid.spacing, edge_order=1)
    mask = grid.mask.copy()
    if np.any(grid.mask):
        m = grid.mask
        spread = m.copy()
        spread[1:, :] |= m[:-1, :]
        spread[:-1, :] |= m[1:, :]
        spread[:, 1:] |= m[:, :-1]
        spread[:, :-1] |= m[:, 1:]
        mask = spread
    return grid.with_values(g1, mask), grid.with_values(g2, mask.copy())

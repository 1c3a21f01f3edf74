"""Loss assembly, Adam, and the training loop for the boundary-integral model."""

import csv
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .geometry import sample_boundary
from .kernels import fundamental_solution, grad_y_fundamental
from .network import forward, jet
from .pibi import (DomainError, evaluate_boundary, evaluate_interior, layer_matrices)


class NumericalError(FloatingPointError):
    """Training produced a non-finite gradient or loss."""


@dataclass
class Dataset:
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.values) or len(self.values) < 1:
            raise ValueError("dataset needs N >= 1 points with one value each")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.values))):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self):
        return len(self.values)

    def subset(self, index):
        return Dataset(self.points[index], self.values[index])


@dataclass
class TrainConfig:
    iterations: int = 10000
    learning_rate: float = 1e-3
    lam: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    integration_points: int = 200
    epsilon_enlarge: float = 0.1
    sampling_mode: str = "equispaced"
    loss_reduction: str = "mean"
    resample_boundary: bool = False
    hidden: tuple = (64, 64, 64)

    def __post_init__(self):
        self.hidden = tuple(int(n) for n in self.hidden)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError("loss_reduction must be 'mean' or 'sum'")

    # "lambda" is the public name in config files and on the command line
    def to_dict(self):
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainReport:
    trace: np.ndarray  # (iterations, 3): observation, boundary, total
    final: dict
    sources: dict
    wall_time: float
    seed: int
    config: dict

    def to_dict(self):
        return {
            "final": self.final,
            "sources": self.sources,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "config": self.config,
            "iterations": int(len(self.trace)),
        }

    def write_trace_csv(self, path, names=("obs_loss", "boundary_loss", "total")):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", *names])
            for k, row in enumerate(self.trace):
                writer.writerow([k, *(f"{v:.17g}" for v in row)])


def _reduce(sq, reduction):
    return float(np.mean(sq)) if reduction == "mean" else float(np.sum(sq))


def observation_loss(model, data, reduction="mean"):
    """Squared misfit of the interior reconstruction at the data points."""
    residual = evaluate_interior(model, data.points) - data.values
    return _reduce(residual**2, reduction)


def boundary_loss(model, collocation, reduction="mean"):
    """Squared gap between the boundary reconstruction and the network."""
    pts = np.asarray(collocation if collocation is not None else np.zeros((0, 2)), dtype=np.float64)
    if len(pts) == 0:
        warnings.warn("empty collocation set; boundary loss is zero", stacklevel=2)
        return 0.0
    gap = evaluate_boundary(model, pts) - forward(model.params, pts)
    return _reduce(gap**2, reduction)


def total_loss(model, data, collocation=None, lam=0.0, reduction="mean"):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    obs = observation_loss(model, data, reduction)
    if collocation is None or len(collocation) == 0 or lam == 0:
        return obs
    return obs + lam * boundary_loss(model, collocation, reduction)


@dataclass
class LossTerms:
    observation: float
    boundary: float
    total: float
    gradient: np.ndarray = field(repr=False, default=None)


class ParameterVector:
    """Flat view of the trainable parameters of a model.

    Layout: network parameters, then source magnitudes and source locations
    when these are trainable.
    """

    def __init__(self, params, sources):
        self.n_net = params.size
        self.m = len(sources)
        self.d = params.input_dim
        self.mags = sources.trainable_magnitudes and self.m > 0
        self.locs = sources.trainable_locations and self.m > 0
        self.size = self.n_net + (self.m if self.mags else 0) + (self.m * self.d if self.locs else 0)

    def pack(self, params, sources):
        parts = [params.theta]
        if self.mags:
            parts.append(sources.magnitudes)
        if self.locs:
            parts.append(sources.locations.ravel())
        return np.concatenate(parts)

    def pack_grad(self, g_net, g_mag, g_loc):
        parts = [g_net]
        if self.mags:
            parts.append(g_mag)
        if self.locs:
            parts.append(g_loc.ravel())
        return np.concatenate(parts)

    def unpack(self, vec, params, sources):
        params.theta[...] = vec[: self.n_net]
        k = self.n_net
        if self.mags:
            sources.magnitudes[...] = vec[k: k + self.m]
            k += self.m
        if self.locs:
            sources.locations[...] = vec[k: k + self.m * self.d].reshape(self.m, self.d)


def _source_terms(sources, x):
    """Values ``G(x_i, y_m)`` and gradients wrt ``y_m`` for all pairs."""
    if len(sources) == 0:
        return np.zeros((len(x), 0)), np.zeros((len(x), 0, x.shape[1]))
    xi = x[:, None, :]
    ym = sources.locations[None]
    return fundamental_solution(xi, ym), grad_y_fundamental(xi, ym)


class PibiObjective:
    """Loss and exact gradient of the (weighted) observation + boundary loss.

    The layer-potential matrices at the data and collocation points depend
    only on the fixed quadrature nodes and are computed once.
    """

    def __init__(self, model, data, collocation=None, lam=0.0, reduction="mean"):
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        if not np.all(model.domain.contains(data.points)):
            raise DomainError("all data points must lie strictly inside the integration box")
        self.data = data
        self.lam = float(lam)
        self.reduction = reduction
        coll = np.zeros((0, data.points.shape[1])) if collocation is None else \
            np.atleast_2d(np.asarray(collocation, dtype=np.float64))
        self.coll = coll if (len(coll) and self.lam > 0) else None
        if self.coll is not None and not np.all(model.domain.on_boundary(self.coll, 1e-9)):
            raise DomainError("collocation points must lie on the integration boundary")
        self.set_boundary(model.boundary)

    def set_boundary(self, samples):
        """(Re)compute the quadrature matrices for a node set."""
        self.samples = samples
        self.single, self.double = layer_matrices(self.data.points, samples)
        if self.coll is not None:
            self.c_single, self.c_double = layer_matrices(self.coll, samples)

    def _scale(self, n):
        return 1.0 / n if self.reduction == "mean" else 1.0

    def __call__(self, model, layout=None, with_grad=True):
        samples = self.samples
        bj = jet(model.params, samples.points, samples.normals[None])
        h, hn = bj.value, bj.first[0]
        src = model.sources
        g_src, dg_src = _source_terms(src, self.data.points)

        u = self.single @ hn - self.double @ h + g_src @ src.magnitudes
        res = u - self.data.values
        s_obs = self._scale(len(res))
        obs = s_obs * float(res @ res)

        bnd = 0.0
        if self.coll is not None:
            cj = jet(model.params, self.coll)
            gc_src, dgc_src = _source_terms(src, self.coll)
            gap = (self.c_single @ hn - self.c_double @ h - 0.5 * cj.value
                   + gc_src @ src.magnitudes)
            s_bnd = self._scale(len(gap))
            bnd = s_bnd * float(gap @ gap)
        total = obs + self.lam * bnd
        terms = LossTerms(obs, bnd, total)
        if not with_grad:
            return terms

        du = 2.0 * s_obs * res
        h_bar = -(self.double.T @ du)
        hn_bar = self.single.T @ du
        g_mag = g_src.T @ du
        g_loc = np.einsum("i,m,imd->md", du, src.magnitudes, dg_src)
        g_net = bj.backward(h_bar, hn_bar[None]).theta
        if self.coll is not None:
            dgap = 2.0 * s_bnd * self.lam * gap
            g_net = g_net + bj.backward(-(self.c_double.T @ dgap), (self.c_single.T @ dgap)[None]).theta
            g_net = g_net + cj.backward(-0.5 * dgap).theta
            g_mag = g_mag + gc_src.T @ dgap
            g_loc = g_loc + np.einsum("i,m,imd->md", dgap, src.magnitudes, dgc_src)
        layout = layout or ParameterVector(model.params, src)
        terms.gradient = layout.pack_grad(g_net, g_mag, g_loc)
        return terms


class Adam:
    """Adam with bias correction on a flat parameter vector."""

    def __init__(self, size, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        if not np.all(np.isfinite(grad)):
            bad = np.flatnonzero(~np.isfinite(grad))
            raise NumericalError(f"non-finite gradient at step {self.t + 1} "
                                 f"(entries {bad[:5].tolist()}{'...' if len(bad) > 5 else ''})")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta


def clamp_sources(sources, domain, margin=1e-6):
    """Keep source locations strictly inside ``domain``."""
    if len(sources):
        lo = np.asarray(domain.lower) + margin
        hi = np.asarray(domain.upper) - margin
        np.clip(sources.locations, lo, hi, out=sources.locations)


def run_adam(model_params, sources, objective, config, clamp_domain=None, callback=None):
    """Shared full-batch Adam loop; updates ``model_params`` and ``sources`` in place.

    ``objective()`` returns :class:`LossTerms` with a gradient in the layout
    of :class:`ParameterVector`.  Returns the loss trace.
    """
    layout = ParameterVector(model_params, sources)
    theta = layout.pack(model_params, sources)
    adam = Adam(layout.size, config.learning_rate, config.adam_beta1,
                config.adam_beta2, config.adam_eps)
    trace = np.empty((config.iterations, 3))
    for it in range(config.iterations):
        terms = objective(layout)
        if not np.isfinite(terms.total):
            raise NumericalError(f"non-finite loss at iteration {it}")
        trace[it] = (terms.observation, terms.boundary, terms.total)
        adam.step(theta, terms.gradient)
        layout.unpack(theta, model_params, sources)
        if clamp_domain is not None and layout.locs:
            clamp_sources(sources, clamp_domain)
            theta[...] = layout.pack(model_params, sources)
        if callback is not None:
            callback(it, terms)
    return trace


def train(model, data, config=None, collocation=None):
    """Fit ``model`` (a copy is trained) to ``data`` with full-batch Adam.

    Returns the trained model and a :class:`TrainReport`.
    """
    config = config or TrainConfig()
    model = model.copy()
    objective = PibiObjective(model, data, collocation, config.lam, config.loss_reduction)
    count = len(model.boundary)
    step = iter(range(config.iterations))

    def loss(layout):
        if config.resample_boundary:
            # fresh uniform nodes every iteration, reproducible from the seed
            objective.set_boundary(sample_boundary(model.domain, count, "random",
                                                   [config.seed, next(step)]))
        return objective(model, layout)

    start = time.perf_counter()
    trace = run_adam(model.params, model.sources, loss, config, clamp_domain=model.data_domain)
    objective.set_boundary(model.boundary)
    final = objective(model, with_grad=False)
    report = TrainReport(
        trace=trace,
        final={"obs_loss": final.observation, "boundary_loss": final.boundary, "total": final.total},
        sources=model.sources.to_dict(),
        wall_time=time.perf_counter() - start,
        seed=config.seed,
        config=config.to_dict(),
    )
    return model, report

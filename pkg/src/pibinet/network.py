"""Fully connected tanh network with a hand-written differentiation engine.

The engine propagates a *jet* through the network: the value, first
directional derivatives along ``K`` input directions and (optionally) the
matching second directional derivatives.  A single reverse sweep over the
recorded jet then returns exact parameter gradients of any scalar loss built
from those quantities, which covers normal derivatives (one direction per
point) and Laplacians (the ``d`` coordinate directions, second order).
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_HIDDEN = (64, 64, 64)


@dataclass
class MlpParams:
    """Weights and biases stored in one flat float64 vector.

    Layer ``l`` maps ``layer_sizes[l]`` inputs to ``layer_sizes[l + 1]``
    outputs; its weight matrix has shape ``(out, in)``.  ``weights`` and
    ``biases`` are views into ``theta``.
    """

    layer_sizes: tuple
    theta: np.ndarray

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ValueError("the network must have a single output")
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (parameter_count(self.layer_sizes),):
            raise ValueError("parameter vector does not match layer sizes")
        self.weights, self.biases = [], []
        offset = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.theta[offset: offset + n_in * n_out].reshape(n_out, n_in))
            offset += n_in * n_out
            self.biases.append(self.theta[offset: offset + n_out])
            offset += n_out

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def size(self):
        return self.theta.size

    def copy(self):
        return MlpParams(self.layer_sizes, self.theta.copy())

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": "tanh",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data):
        sizes = tuple(data["layer_sizes"])
        flat = []
        for w, b in zip(data["weights"], data["biases"]):
            flat.append(np.asarray(w, dtype=np.float64).ravel())
            flat.append(np.asarray(b, dtype=np.float64).ravel())
        return cls(sizes, np.concatenate(flat))

    @classmethod
    def from_layers(cls, weights, biases):
        weights = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in weights]
        sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
        flat = []
        for w, b in zip(weights, biases):
            flat.append(w.ravel())
            flat.append(np.asarray(b, dtype=np.float64).ravel())
        return cls(tuple(sizes), np.concatenate(flat))


# A parameter gradient has exactly the layout of the parameters.
ParamGradient = MlpParams


def parameter_count(layer_sizes):
    return sum(n_in * n_out + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_params(layer_sizes, seed=0):
    """Glorot-uniform weights and zero biases from ``default_rng(seed)``."""
    rng = np.random.default_rng(seed)
    flat = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        flat.append(rng.uniform(-limit, limit, size=n_in * n_out))
        flat.append(np.zeros(n_out))
    return MlpParams(tuple(layer_sizes), np.concatenate(flat))


def default_layer_sizes(d=2, hidden=DEFAULT_HIDDEN):
    return (d, *hidden, 1)


class Jet:
    """Recorded forward pass; see :func:`jet`.

    Attributes
    ----------
    value : (n,) array
        Network output at each point.
    first : (K, n) array or None
        Directional derivatives along each of the ``K`` directions.
    second : (K, n) array or None
        Second directional derivatives along the same directions.
    """

    def __init__(self, params, x, directions, second_order):
        self.params = params
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != params.input_dim:
            raise ValueError(f"expected {params.input_dim}-dimensional inputs, got {x.shape[-1]}")
        if directions is not None:
            directions = np.asarray(directions, dtype=np.float64)
            if directions.ndim == 2:
                directions = directions[None]
            if directions.shape[1:] != x.shape:
                raise ValueError("directions must have shape (K, n, d)")
        elif second_order:
            raise ValueError("second-order jets need directions")
        self.second_order = second_order
        self._forward(x, directions)

    def _forward(self, a, t):
        s = None
        self._tape = []
        n_layers = len(self.params.weights)
        for layer, (w, b) in enumerate(zip(self.params.weights, self.params.biases)):
            entry = {"a": a, "t": t, "s": s}
            z = a @ w.T + b
            zt = t @ w.T if t is not None else None
            zs = s @ w.T if s is not None else None
            if layer == n_layers - 1:
                a, t, s = z, zt, zs
            else:
                y = np.tanh(z)
                d1 = 1.0 - y * y
                entry.update(y=y, d1=d1)
                a = y
                if zt is not None:
                    d2 = -2.0 * y * d1
                    entry.update(d2=d2, zt=zt, zs=zs)
                    t = d1 * zt
                    if self.second_order:
                        s = d2 * zt * zt
                        if zs is not None:
                            s = s + d1 * zs
            self._tape.append(entry)
        self.value = a[:, 0]
        self.first = t[..., 0] if t is not None else None
        if s is not None:
            self.second = s[..., 0]
        else:
            self.second = np.zeros_like(self.first) if self.second_order else None

    def backward(self, value_bar=None, first_bar=None, second_bar=None):
        """Parameter gradient of ``sum(value_bar * value) + sum(first_bar * first)
        + sum(second_bar * second)``.

        The adjoint arrays have the shapes of the matching jet attributes;
        ``None`` means zero.
        """
        params = self.params
        grad = MlpParams(params.layer_sizes, np.zeros_like(params.theta))
        n = self.value.shape[0]
        abar = (np.zeros(n) if value_bar is None else np.asarray(value_bar, float))[:, None]
        tbar = sbar = None
        if first_bar is not None:
            if self.first is None:
                raise ValueError("jet was recorded without directions")
            tbar = np.asarray(first_bar, float)[..., None]
        if second_bar is not None:
            if self.second is None:
                raise ValueError("jet was recorded without second derivatives")
            sbar = np.asarray(second_bar, float)[..., None]
            if tbar is None:
                tbar = np.zeros_like(sbar)

        n_layers = len(params.weights)
        zbar, ztbar, zsbar = abar, tbar, sbar
        for layer in reversed(range(n_layers)):
            entry = self._tape[layer]
            if layer < n_layers - 1:
                # pull adjoints of (y, t, s) back to (z, zt, zs) through tanh
                d1 = entry["d1"]
                zbar = abar * d1
                ztbar = zsbar = None
                if tbar is not None:
                    d2, zt = entry["d2"], entry["zt"]
                    zbar = zbar + np.sum(tbar * d2 * zt, axis=0)
                    ztbar = tbar * d1
                    if sbar is not None:
                        zs = entry["zs"]
                        d3 = -2.0 * d1 * d1 - 2.0 * entry["y"] * d2
                        curv = d3 * zt * zt
                        if zs is not None:
                            curv = curv + d2 * zs
                        zbar = zbar + np.sum(sbar * curv, axis=0)
                        ztbar = ztbar + 2.0 * sbar * d2 * zt
                        zsbar = sbar * d1

            g = zbar.T @ entry["a"]
            if ztbar is not None and entry["t"] is not None:
                g += _contract(ztbar, entry["t"])
            if zsbar is not None and entry["s"] is not None:
                g += _contract(zsbar, entry["s"])
            grad.weights[layer][...] = g
            grad.biases[layer][...] = zbar.sum(axis=0)
            if layer > 0:
                w = params.weights[layer]
                abar = zbar @ w
                tbar = ztbar @ w if ztbar is not None else None
                sbar = zsbar @ w if zsbar is not None else None
        return grad


def _contract(bar, fwd):
    """sum_k bar[k].T @ fwd[k] as a single matrix product."""
    return bar.reshape(-1, bar.shape[-1]).T @ np.ascontiguousarray(fwd).reshape(-1, fwd.shape[-1])


def jet(params, x, directions=None, second_order=False):
    """Record a forward pass at points ``x`` (shape ``(n, d)``).

    ``directions`` has shape ``(K, n, d)`` (or ``(n, d)`` for ``K = 1``).
    """
    return Jet(params, x, directions, second_order)


def _as_points(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"expected {params.input_dim}-dimensional inputs, got {x.shape[-1]}")
    return x, single


def _coordinate_directions(n, d):
    return np.broadcast_to(np.eye(d)[:, None, :], (d, n, d))


def forward(params, x):
    """Network output at one point (scalar) or a stack of points."""
    x, single = _as_points(params, x)
    value = Jet(params, x, None, False).value
    return float(value[0]) if single else value


def input_gradient(params, x):
    """Gradient of the output with respect to the input point(s)."""
    x, single = _as_points(params, x)
    n, d = x.shape
    first = Jet(params, x, _coordinate_directions(n, d), False).first
    grad = first.T
    return grad[0] if single else grad


def input_laplacian(params, x):
    """Sum of the unmixed second input derivatives."""
    x, single = _as_points(params, x)
    n, d = x.shape
    lap = Jet(params, x, _coordinate_directions(n, d), True).second.sum(axis=0)
    return float(lap[0]) if single else lap


def param_gradient(recorded, value_bar=None, first_bar=None, second_bar=None):
    """Parameter gradient of a loss through a recorded :class:`Jet`.

    The loss enters only through its partial derivatives with respect to the
    recorded quantities (``value_bar`` etc.), so any composite loss of values,
    directional derivatives and Laplacians can be differentiated by summing
    the results of several jets.
    """
    return recorded.backward(value_bar, first_bar, second_bar)

"""Boundary-integral networks for data assimilation with the Laplace and
Poisson equations."""

__version__ = "0.1.0"

from .fields import FieldGrid
from .geometry import BoxDomain, boundary_measure, enlarge, sample_boundary
from .kernels import fundamental_solution, grad_y_fundamental, normal_derivative_g
from .network import MlpParams, forward, init_params, input_gradient, input_laplacian
from .pibi import (PibiModel, PointSourceSet, evaluate_boundary, evaluate_field,
                   evaluate_interior, gradient_field, source_potential)
from .training import Dataset, TrainConfig, train

__all__ = [
    "BoxDomain", "Dataset", "FieldGrid", "MlpParams", "PibiModel", "PointSourceSet",
    "TrainConfig", "boundary_measure", "enlarge", "evaluate_boundary", "evaluate_field",
    "evaluate_interior", "forward", "fundamental_solution", "grad_y_fundamental",
    "gradient_field", "init_params", "input_gradient", "input_laplacian",
    "normal_derivative_g", "sample_boundary", "source_potential", "train",
]

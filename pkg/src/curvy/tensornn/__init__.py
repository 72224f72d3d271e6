"""Hand-rolled autodiff tensors, layers, and optimization."""
from .autodiff import Tensor, chamfer_loss, concat, ensure_tensor, mse, parameter
from .gradcheck import grad_check, run_gradient_suite
from .layers import (DenseLayer, DiffNormLayer, GATLayer, GCNLayer, SageLayer,
                     gaussian_init, neighbor_mean_matrix, normalized_adjacency)
from .optim import Adam

__all__ = [
    "Tensor",
    "ensure_tensor",
    "parameter",
    "concat",
    "mse",
    "chamfer_loss",
    "Adam",
    "DenseLayer",
    "GCNLayer",
    "SageLayer",
    "GATLayer",
    "DiffNormLayer",
    "gaussian_init",
    "neighbor_mean_matrix",
    "normalized_adjacency",
    "grad_check",
    "run_gradient_suite",
]

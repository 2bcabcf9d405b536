"""From-scratch neural-network core: kernels, layers, loss, training."""

from .gradcheck import grad_check, relu_kink_margin
from .kernels import (
    available_backends,
    boxsum3x3,
    get_backend,
    im2col1d,
    im2col2d,
    set_backend,
)
from .layers import (
    Conv1D,
    Conv1x1,
    Conv2D,
    Dense,
    DenseAdjacency,
    GCNLayer,
    GridAdjacency,
    Layer,
    Parameter,
    ReLU,
    Sigmoid,
    Stack,
    grid_adjacency_matrix,
)
from .loss import AUTO, CLAMP_EPS, resolve_pos_weight, weighted_bce
from .train import (
    Adam,
    EpochRecord,
    SplitData,
    TrainConfig,
    TrainResult,
    train,
)

__all__ = [
    "Adam",
    "AUTO",
    "CLAMP_EPS",
    "Conv1D",
    "Conv1x1",
    "Conv2D",
    "Dense",
    "DenseAdjacency",
    "EpochRecord",
    "GCNLayer",
    "GridAdjacency",
    "Layer",
    "Parameter",
    "ReLU",
    "Sigmoid",
    "SplitData",
    "Stack",
    "TrainConfig",
    "TrainResult",
    "available_backends",
    "boxsum3x3",
    "get_backend",
    "grad_check",
    "grid_adjacency_matrix",
    "im2col1d",
    "im2col2d",
    "relu_kink_margin",
    "resolve_pos_weight",
    "set_backend",
    "train",
    "weighted_bce",
]

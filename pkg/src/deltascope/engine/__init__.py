"""Dense tensors, reverse-mode autodiff, and the layer primitives built on them."""

from deltascope.engine.tensor import Tensor
from deltascope.engine.nn_ops import (
    BatchNormState,
    activate,
    batch_norm,
    concat_channels,
    conv2d,
    dense,
    dropout,
    max_pool2d,
    relu,
    sigmoid,
    softmax_channels,
    transpose_conv2d,
)
from deltascope.engine.gradcheck import GradCheckResult, grad_check

__all__ = [
    "BatchNormState",
    "GradCheckResult",
    "Tensor",
    "activate",
    "batch_norm",
    "concat_channels",
    "conv2d",
    "dense",
    "dropout",
    "grad_check",
    "max_pool2d",
    "relu",
    "sigmoid",
    "softmax_channels",
    "transpose_conv2d",
]

"""Small reverse-mode autodiff core used by the agent and the logic engine."""

from .gradcheck import gradient_check, numeric_gradient
from .losses import huber_loss, squared_loss
from .nn import LayerSpec, Sequential, activation, conv2d, conv2d_op, conv_output_size, dense, forward, init_params
from .optim import Adam
from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    gather_rows,
    matmul,
    maximum,
    minimum,
    no_grad,
    parameter,
    relu,
    sigmoid,
    tanh,
)

__all__ = [
    "Adam",
    "LayerSpec",
    "Sequential",
    "ShapeError",
    "Tensor",
    "activation",
    "as_tensor",
    "concat",
    "conv2d",
    "conv2d_op",
    "conv_output_size",
    "dense",
    "forward",
    "gather_rows",
    "gradient_check",
    "huber_loss",
    "init_params",
    "matmul",
    "maximum",
    "minimum",
    "no_grad",
    "numeric_gradient",
    "parameter",
    "relu",
    "sigmoid",
    "squared_loss",
    "tanh",
]

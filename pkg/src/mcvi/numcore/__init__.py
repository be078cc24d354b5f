"""Minimal float64 tensor + reverse-mode autodiff engine."""

from .tensor import NonFiniteError, Tensor, concat, grad_enabled, no_grad
from .functional import (
    activation,
    adaptive_avg_pool_1x1,
    batch_norm,
    conv2d,
    depthwise_conv2d,
    global_avg_pool,
    linear,
    mish,
    relu,
    sigmoid,
    tanh,
)
from .gradcheck import assert_gradients_close, max_rel_error, numerical_grad
from .modules import Module, Parameter
from .optim import Adam
from .serialize import load_arrays, load_json_entry, save_arrays

__all__ = [
    "Adam",
    "Module",
    "NonFiniteError",
    "Parameter",
    "Tensor",
    "activation",
    "adaptive_avg_pool_1x1",
    "assert_gradients_close",
    "batch_norm",
    "concat",
    "conv2d",
    "depthwise_conv2d",
    "global_avg_pool",
    "grad_enabled",
    "linear",
    "load_arrays",
    "load_json_entry",
    "max_rel_error",
    "mish",
    "no_grad",
    "numerical_grad",
    "relu",
    "save_arrays",
    "sigmoid",
    "tanh",
]

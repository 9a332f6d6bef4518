from metameta.numerics.adam import AdamState, adam_init, adam_step
from metameta.numerics.autodiff import (
    cross_entropy,
    grad,
    log_softmax,
    mean_cross_entropy,
    meta_grad,
    softmax,
    stop_gradient,
    unroll_inner,
    value_and_grad,
)
from metameta.numerics.mlp import mlp_dims, mlp_forward, mlp_init
from metameta.numerics.params import ParamSet
from metameta.numerics.rng import Rng

__all__ = [
    "AdamState",
    "adam_init",
    "adam_step",
    "cross_entropy",
    "grad",
    "log_softmax",
    "mean_cross_entropy",
    "meta_grad",
    "softmax",
    "stop_gradient",
    "unroll_inner",
    "value_and_grad",
    "mlp_dims",
    "mlp_forward",
    "mlp_init",
    "ParamSet",
    "Rng",
]

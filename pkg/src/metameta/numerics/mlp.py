from __future__ import annotations

from typing import Any, List, Sequence, Union

import autograd.numpy as anp
import numpy as np

from metameta.errors import ConfigError, ShapeError
from metameta.numerics.params import ParamSet
from metameta.numerics.rng import Rng
from metameta.types import Activation


def layer_names(n_layers: int) -> List[str]:
    names: List[str] = []
    for i in range(n_layers):
        names.extend([f"w{i}", f"b{i}"])
    return names


def validate_dims(layer_dims: Sequence[int]) -> List[int]:
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ConfigError(f"an MLP needs at least 2 layer dims, got {dims!r}")
    if any(d <= 0 for d in dims):
        raise ConfigError(f"layer dims must be positive, got {dims!r}")
    return dims


def mlp_init(layer_dims: Sequence[int], rng: Rng) -> ParamSet:
    """
    Glorot-uniform weights, zero biases.

    Weights are stored [fan_in, fan_out] so that a row batch maps as x @ w + b.
    """
    dims = validate_dims(layer_dims)
    items = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float64)
        items.append((f"w{i}", w))
        items.append((f"b{i}", np.zeros(fan_out, dtype=np.float64)))
    return ParamSet.from_items(items)


def mlp_dims(params: ParamSet) -> List[int]:
    n_layers = len(params) // 2
    if len(params) % 2 or list(params.names) != layer_names(n_layers):
        raise ShapeError(f"not an MLP ParamSet: {list(params.names)!r}")
    dims = [int(np.shape(params["w0"])[0])]
    for i in range(n_layers):
        dims.append(int(np.shape(params[f"w{i}"])[1]))
    return dims


def activate(h: Any, activation: Union[Activation, str]) -> Any:
    activation = Activation(activation)
    if activation is Activation.RELU:
        return anp.where(h > 0, h, 0.0)
    return anp.tanh(h)


def mlp_forward(
    params: ParamSet,
    x: Any,
    activation: Union[Activation, str] = Activation.RELU,
) -> Any:
    """
    Affine/activation stack; no activation after the last layer.

    `x` may be one vector [d] or a row batch [n, d].
    """
    n_layers = len(params) // 2
    d_in = np.shape(params["w0"])[0]
    if np.shape(x)[-1] != d_in:
        raise ShapeError(f"input width {np.shape(x)[-1]} does not match first layer {d_in}")
    h = x
    for i in range(n_layers):
        h = anp.dot(h, params[f"w{i}"]) + params[f"b{i}"]
        if i < n_layers - 1:
            h = activate(h, activation)
    return h

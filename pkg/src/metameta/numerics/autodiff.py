from __future__ import annotations

from typing import Any, Callable, Optional, Tuple

import autograd.numpy as anp
import numpy as np
from autograd.core import make_vjp
from autograd.extend import vspace
from autograd.scipy.special import logsumexp
from autograd.tracer import getval

from metameta.errors import ConfigError, DifferentiationError, ShapeError
from metameta.numerics.params import ParamSet

LossFn = Callable[[ParamSet], Any]


def log_softmax(logits: Any) -> Any:
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def softmax(logits: Any) -> Any:
    """Max-subtracted softmax over the last axis."""
    shifted = logits - anp.max(getval(logits), axis=-1, keepdims=True)
    e = anp.exp(shifted)
    return e / anp.sum(e, axis=-1, keepdims=True)


def cross_entropy(logits: Any, label: int, weight: float = 1.0) -> Any:
    n_classes = np.shape(logits)[-1]
    if not 0 <= int(label) < n_classes:
        raise ShapeError(f"label {label} out of range for {n_classes} logits")
    if weight <= 0:
        raise ConfigError(f"example weight must be positive, got {weight}")
    return -weight * log_softmax(logits)[int(label)]


def mean_cross_entropy(
    logits: Any,
    labels: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> Any:
    """
    Mean over rows of weight_i * -log softmax(logits_i)[label_i].

    Dataset losses are means everywhere; weights scale individual rows only.
    """
    n, n_classes = np.shape(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise ShapeError("cross-entropy over an empty batch")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ShapeError(f"labels out of range for {n_classes} logits")
    one_hot = np.eye(n_classes)[labels]
    nll = -anp.sum(one_hot * log_softmax(logits), axis=1)
    if weights is not None:
        nll = nll * np.asarray(weights, dtype=np.float64)
    return anp.mean(nll)


def stop_gradient(x: Any) -> Any:
    return getval(x)


def value_and_grad(loss_fn: LossFn, params: ParamSet) -> Tuple[Any, ParamSet]:
    """
    Reverse-mode gradient of a scalar loss with respect to every entry of `params`.

    The returned gradient stays traceable when `params` is itself being
    differentiated, so calls may be nested.
    """
    fun = lambda arrays: loss_fn(params.with_arrays(arrays))
    try:
        vjp, value = make_vjp(fun, list(params.arrays))
    except NotImplementedError as e:
        raise DifferentiationError(f"unsupported primitive in loss: {e}") from e

    try:
        space = vspace(value)
    except TypeError as e:
        raise DifferentiationError(f"loss returned a non-numeric value: {type(value)!r}") from e
    if space.size != 1:
        raise DifferentiationError(
            f"gradient root must be a scalar, got shape {np.shape(getval(value))}"
        )

    try:
        grads = vjp(space.ones())
    except NotImplementedError as e:
        raise DifferentiationError(f"unsupported primitive in nested position: {e}") from e
    return value, params.with_arrays(grads)


def grad(loss_fn: LossFn, params: ParamSet) -> ParamSet:
    return value_and_grad(loss_fn, params)[1]


def unroll_inner(
    params: ParamSet,
    inner_loss: LossFn,
    lr: float,
    steps: int,
    first_order: bool = False,
) -> ParamSet:
    """`steps` plain gradient-descent updates; differentiable w.r.t. the start point."""
    if steps < 0:
        raise ConfigError(f"inner steps must be >= 0, got {steps}")
    for _ in range(steps):
        g = grad(inner_loss, params)
        if first_order:
            g = g.map(stop_gradient)
        params = params.zip_map(g, lambda p, d: p - lr * d)
    return params


def meta_grad(
    outer_loss: LossFn,
    inner_loss: LossFn,
    params: ParamSet,
    lr: float,
    steps: int,
    first_order: bool = False,
) -> ParamSet:
    """
    d/dθ outer_loss(unroll_inner(θ)), second-order terms included unless
    `first_order` treats each inner gradient as a constant.
    """
    return grad(
        lambda p: outer_loss(unroll_inner(p, inner_loss, lr, steps, first_order)),
        params,
    )

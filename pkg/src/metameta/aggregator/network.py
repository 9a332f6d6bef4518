from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence, Tuple

import autograd.numpy as anp
import numpy as np

from metameta.config import AggregatorConfig
from metameta.errors import ConfigError, ShapeError
from metameta.numerics import ParamSet, mlp_dims, mlp_init
from metameta.numerics.mlp import activate
from metameta.numerics.rng import Rng
from metameta.types import Activation


@dataclass(frozen=True, eq=False)
class AggParams:
    """
    θ_g plus its input layout. The input row is [embedding ‖ no_1, yes_1, …, no_k, yes_k].
    """

    params: ParamSet
    embed_dim: int
    k: int
    hidden_dims: Tuple[int, ...] = (256, 256)
    dropout_input: float = 0.1
    dropout_hidden: float = 0.4

    def __post_init__(self) -> None:
        if self.k < 1 or self.embed_dim < 1:
            raise ConfigError("aggregator needs k >= 1 and a positive embedding width")
        for p in (self.dropout_input, self.dropout_hidden):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"drop probability must lie in [0, 1), got {p}")
        expected = [self.input_width, *self.hidden_dims, 2]
        if mlp_dims(self.params) != expected:
            raise ShapeError(
                f"aggregator params {mlp_dims(self.params)!r} do not match layout {expected!r}"
            )

    @property
    def input_width(self) -> int:
        return self.embed_dim + 2 * self.k

    def with_params(self, params: ParamSet) -> AggParams:
        return AggParams(
            params=params,
            embed_dim=self.embed_dim,
            k=self.k,
            hidden_dims=self.hidden_dims,
            dropout_input=self.dropout_input,
            dropout_hidden=self.dropout_hidden,
        )

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "k": self.k,
            "hidden_dims": list(self.hidden_dims),
            "dropout_input": self.dropout_input,
            "dropout_hidden": self.dropout_hidden,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> AggParams:
        return cls(
            params=ParamSet.from_dict(data["params"]),
            embed_dim=int(data["embed_dim"]),
            k=int(data["k"]),
            hidden_dims=tuple(int(h) for h in data["hidden_dims"]),
            dropout_input=float(data["dropout_input"]),
            dropout_hidden=float(data["dropout_hidden"]),
        )


def agg_init(
    embed_dim: int,
    k: int,
    rng: Rng,
    hidden_dims: Sequence[int] = (256, 256),
    dropout_input: float = 0.1,
    dropout_hidden: float = 0.4,
) -> AggParams:
    hidden = tuple(int(h) for h in hidden_dims)
    params = mlp_init([embed_dim + 2 * k, *hidden, 2], rng)
    return AggParams(
        params=params,
        embed_dim=embed_dim,
        k=k,
        hidden_dims=hidden,
        dropout_input=dropout_input,
        dropout_hidden=dropout_hidden,
    )


def _dropout(h: Any, p: float, rng: Rng) -> Any:
    if p == 0.0:
        return h
    keep = rng.random(np.shape(h)) >= p
    return h * (keep / (1.0 - p))


def agg_forward(
    agg: AggParams,
    embed: np.ndarray,
    learner_logits: Any,
    dropout_rng: Optional[Rng] = None,
    params: Optional[ParamSet] = None,
) -> Any:
    """
    g_θ on [embed ‖ learner logits] with ReLU hidden layers.

    `learner_logits` is one row [2k] or a query batch [n, 2k]; the embedding is
    shared across rows. Dropout (inverted) is active only when `dropout_rng`
    is given. `params` overrides `agg.params` while tracing gradients.
    """
    embed = np.asarray(embed, dtype=np.float64)
    if embed.shape != (agg.embed_dim,):
        raise ShapeError(f"embedding of shape {embed.shape} vs layout width {agg.embed_dim}")
    width = np.shape(learner_logits)[-1]
    if width != 2 * agg.k:
        raise ShapeError(f"expected {2 * agg.k} learner logits, got {width}")

    theta = agg.params if params is None else params
    if len(np.shape(learner_logits)) == 1:
        h = anp.concatenate([embed, learner_logits])
    else:
        n = np.shape(learner_logits)[0]
        h = anp.concatenate([np.broadcast_to(embed, (n, agg.embed_dim)), learner_logits], axis=1)

    if dropout_rng is not None:
        h = _dropout(h, agg.dropout_input, dropout_rng)
    n_layers = len(theta) // 2
    for i in range(n_layers):
        h = anp.dot(h, theta[f"w{i}"]) + theta[f"b{i}"]
        if i < n_layers - 1:
            h = activate(h, Activation.RELU)
            if dropout_rng is not None:
                h = _dropout(h, agg.dropout_hidden, dropout_rng)
    return h


def agg_from_config(embed_dim: int, k: int, agg_cfg: AggregatorConfig, rng: Rng) -> AggParams:
    p_in, p_hidden = agg_cfg.drop_probabilities()
    return agg_init(
        embed_dim,
        k,
        rng,
        hidden_dims=agg_cfg.hidden_dims,
        dropout_input=p_in,
        dropout_hidden=p_hidden,
    )

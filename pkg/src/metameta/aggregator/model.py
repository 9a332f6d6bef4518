from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional, Sequence, Tuple

import autograd.numpy as anp
import numpy as np

from metameta.aggregator.cache import FitCache
from metameta.aggregator.network import AggParams, agg_forward
from metameta.clustering import Centroids, EmbeddingSpec, embed_support
from metameta.config import TrainConfig
from metameta.errors import ConfigError, ShapeError
from metameta.learner import LearnerInit, Support, inner_train, support_arrays
from metameta.numerics import ParamSet, mlp_forward
from metameta.types import Activation, GradOrder
from metameta.utils import array_digest


@dataclass(frozen=True, eq=False)
class AggregateModel:
    """θ = ⟨θ_g, θ_1^T, …, θ_k^T⟩ plus the routing centroids when clustering produced them."""

    learners: Tuple[LearnerInit, ...]
    tcfg: TrainConfig
    agg: AggParams
    centroids: Optional[Centroids] = None
    embedding: EmbeddingSpec = EmbeddingSpec()

    def __post_init__(self) -> None:
        if not self.learners:
            raise ConfigError("an aggregate model needs at least one learner")
        check_learners(self.learners)
        if self.agg.k != len(self.learners):
            raise ShapeError(f"aggregator expects {self.agg.k} learners, model has {self.k}")
        if self.agg.embed_dim != self.feature_dim:
            raise ShapeError(
                f"aggregator embedding width {self.agg.embed_dim} "
                f"vs feature_dim {self.feature_dim}"
            )
        if self.centroids is not None and self.centroids.dim != self.feature_dim:
            raise ShapeError("centroid dimension does not match the learners' feature_dim")

    @property
    def k(self) -> int:
        return len(self.learners)

    @property
    def feature_dim(self) -> int:
        return self.learners[0].feature_dim

    @property
    def activation(self) -> Activation:
        return self.learners[0].activation

    def with_agg(self, agg: AggParams) -> AggregateModel:
        return AggregateModel(self.learners, self.tcfg, agg, self.centroids, self.embedding)

    def with_learners(self, learners: Sequence[LearnerInit]) -> AggregateModel:
        return AggregateModel(tuple(learners), self.tcfg, self.agg, self.centroids, self.embedding)

    def to_dict(self) -> dict:
        return {
            "learners": [lr.to_dict() for lr in self.learners],
            "train": self.tcfg.model_dump(mode="json"),
            "agg": self.agg.to_dict(),
            "centroids": None if self.centroids is None else self.centroids.to_dict(),
            "embedding": self.embedding.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> AggregateModel:
        centroids = data.get("centroids")
        return cls(
            learners=tuple(LearnerInit.from_dict(d) for d in data["learners"]),
            tcfg=TrainConfig.model_validate(data["train"]),
            agg=AggParams.from_dict(data["agg"]),
            centroids=None if centroids is None else Centroids.from_dict(centroids),
            embedding=EmbeddingSpec.from_dict(data["embedding"]),
        )


def check_learners(learners: Sequence[LearnerInit]) -> None:
    first = learners[0]
    for i, lr in enumerate(learners[1:], start=1):
        if lr.arch != first.arch or lr.activation is not first.activation:
            raise ShapeError(f"learner {i} architecture differs from learner 0")


@dataclass(frozen=True, eq=False)
class EpisodeFit:
    """Per-episode state: each learner's inner-trained parameters and h(D_trn)."""

    fitted: Tuple[ParamSet, ...]
    embedding: np.ndarray
    activation: Activation = Activation.RELU

    def learner_logits(self, x: np.ndarray) -> np.ndarray:
        return stacked_logits(self.fitted, x, self.activation)


def stacked_logits(fitted: Sequence[ParamSet], x: Any, activation: Activation) -> Any:
    """[no_1, yes_1, …, no_k, yes_k] per row of `x` (or for one vector)."""
    return anp.concatenate([mlp_forward(p, x, activation) for p in fitted], axis=-1)


def _fit_key(learners: Sequence[LearnerInit], tcfg: TrainConfig, x, y) -> str:
    arrays = [np.asarray(a) for lr in learners for a in lr.params.arrays]
    return f"{tcfg.model_dump_json()}:{array_digest(x, y.astype(np.float64), *arrays)}"


def fit_learners(
    learners: Sequence[LearnerInit],
    d_trn: Support,
    tcfg: TrainConfig,
    cache: Optional[FitCache] = None,
) -> Tuple[ParamSet, ...]:
    """inner_train of every learner on the same support set (numeric, no tracing)."""
    x, y = support_arrays(d_trn)

    def compute() -> Tuple[ParamSet, ...]:
        return tuple(
            inner_train(lr, (x, y), tcfg, GradOrder.FIRST).detached() for lr in learners
        )

    if cache is None:
        return compute()
    return cache.get_or_compute(_fit_key(learners, tcfg, x, y), compute)


def fit_episode(
    model: AggregateModel, d_trn: Support, cache: Optional[FitCache] = None
) -> EpisodeFit:
    embedding = embed_support(d_trn, model.embedding)
    return EpisodeFit(
        fitted=fit_learners(model.learners, d_trn, model.tcfg, cache),
        embedding=embedding,
        activation=model.activation,
    )


def aggregate_logits(model: AggregateModel, fit: EpisodeFit, x: np.ndarray) -> np.ndarray:
    """g* logits for one query vector [2] or a query batch [n, 2], eval mode."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim:
        raise ShapeError(f"query width {x.shape[-1]} vs feature_dim {model.feature_dim}")
    out = agg_forward(model.agg, fit.embedding, fit.learner_logits(x))
    return np.asarray(out, dtype=np.float64)


def aggregate_score(
    model: AggregateModel,
    d_trn: Support,
    x: np.ndarray,
    cache: Optional[FitCache] = None,
) -> Tuple[float, float]:
    """
    g*(x): every learner inner-trained on d_trn, scored on x, then combined by g
    together with the support embedding. Returns (no_score, yes_score).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"aggregate_score takes one feature vector, got shape {x.shape}")
    logits = aggregate_logits(model, fit_episode(model, d_trn, cache), x)
    return float(logits[0]), float(logits[1])

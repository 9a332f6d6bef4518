"""
One interface for every evaluated method: `fit(support)` adapts the method to
an episode and returns a scorer over query rows.

`yes_scores` is a per-query confidence in the positive class, comparable
across episodes of the same method (five-way uses it to pick a class). For
logit-based scorers it is the softmax probability of yes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from metameta.aggregator import (
    AggregateModel,
    EpisodeFit,
    FitCache,
    aggregate_logits,
    fit_episode,
    fit_learners,
)
from metameta.clustering import assign, embed_support
from metameta.config import TrainConfig
from metameta.errors import ClusteringError, ConfigError
from metameta.learner import LearnerInit, Support, inner_train, predict_from_logits
from metameta.logger import get_logger
from metameta.numerics import ParamSet, mlp_forward, softmax
from metameta.types import Activation, EnsembleMode, MethodId

logger = get_logger(__name__)


class EpisodeScorer(Protocol):
    def predict(self, x: np.ndarray) -> np.ndarray: ...

    def yes_scores(self, x: np.ndarray) -> np.ndarray: ...


class Predictor(Protocol):
    method: MethodId

    def fit(self, support: Support) -> EpisodeScorer: ...


def _rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def yes_probability(logits: np.ndarray) -> np.ndarray:
    return np.asarray(softmax(np.asarray(logits, dtype=np.float64)), dtype=np.float64)[:, 1]


@dataclass(frozen=True, eq=False)
class LogitScorer:
    """Scorer over a fitted 2-logit network; `cluster` records nearest-cluster routing."""

    params: ParamSet
    activation: Activation = Activation.RELU
    cluster: Optional[int] = None

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(mlp_forward(self.params, _rows(x), self.activation), dtype=np.float64)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_from_logits(self.logits(x))

    def yes_scores(self, x: np.ndarray) -> np.ndarray:
        return yes_probability(self.logits(x))


# ---- ensembles ----


def ensemble_decide(yes_probs: np.ndarray, mode: EnsembleMode) -> np.ndarray:
    """
    yes_probs: [k, n] per-learner softmax yes-probabilities.

    soft: mean probability > 0.5 (a mean of exactly 0.5 is negative).
    hard: majority of per-learner votes; split votes fall back to the soft rule.
    """
    p = np.atleast_2d(np.asarray(yes_probs, dtype=np.float64))
    k = p.shape[0]
    soft = p.mean(axis=0) > 0.5
    if EnsembleMode(mode) is EnsembleMode.SOFT:
        return soft
    votes = np.sum(p > 0.5, axis=0)
    return np.where(2 * votes == k, soft, 2 * votes > k)


def ensemble_yes_probs(
    fitted: Sequence[ParamSet], x: np.ndarray, activation: Activation
) -> np.ndarray:
    return np.stack([yes_probability(mlp_forward(p, _rows(x), activation)) for p in fitted])


def ensemble_predict(
    fitted: Sequence[ParamSet],
    mode: EnsembleMode,
    x: np.ndarray,
    activation: Activation = Activation.RELU,
) -> Union[bool, np.ndarray]:
    """Bagged prediction from k per-episode fitted learners; a bool for one vector."""
    out = ensemble_decide(ensemble_yes_probs(fitted, x, activation), mode)
    return bool(out[0]) if np.ndim(x) == 1 else out


@dataclass(frozen=True, eq=False)
class EnsembleScorer:
    fitted: Sequence[ParamSet]
    mode: EnsembleMode
    activation: Activation = Activation.RELU

    def predict(self, x: np.ndarray) -> np.ndarray:
        return ensemble_decide(ensemble_yes_probs(self.fitted, x, self.activation), self.mode)

    def yes_scores(self, x: np.ndarray) -> np.ndarray:
        p = ensemble_yes_probs(self.fitted, x, self.activation)
        if self.mode is EnsembleMode.SOFT:
            return p.mean(axis=0)
        # vote count first, mean probability breaks ties between classes
        return np.sum(p > 0.5, axis=0) + 0.5 * p.mean(axis=0)


@dataclass(frozen=True, eq=False)
class AggregateScorer:
    model: AggregateModel
    fit: EpisodeFit

    def logits(self, x: np.ndarray) -> np.ndarray:
        return aggregate_logits(self.model, self.fit, _rows(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_from_logits(self.logits(x))

    def yes_scores(self, x: np.ndarray) -> np.ndarray:
        return yes_probability(self.logits(x))


# ---- the six methods ----


@dataclass(frozen=True, eq=False)
class SingleLearnerPredictor:
    learner: LearnerInit
    tcfg: TrainConfig
    method: MethodId = MethodId.SINGLE_MAML

    def fit(self, support: Support) -> LogitScorer:
        return LogitScorer(
            inner_train(self.learner, support, self.tcfg).detached(), self.learner.activation
        )


@dataclass(frozen=True, eq=False)
class BaggingPredictor:
    learners: Sequence[LearnerInit]
    tcfg: TrainConfig
    mode: EnsembleMode
    cache: Optional[FitCache] = None

    @property
    def method(self) -> MethodId:
        if self.mode is EnsembleMode.HARD:
            return MethodId.HARD_BAGGING
        return MethodId.SOFT_BAGGING

    def fit(self, support: Support) -> EnsembleScorer:
        fitted = fit_learners(self.learners, support, self.tcfg, self.cache)
        return EnsembleScorer(fitted, self.mode, self.learners[0].activation)


@dataclass(frozen=True, eq=False)
class AggregatePredictor:
    model: AggregateModel
    method: MethodId = MethodId.META_META
    cache: Optional[FitCache] = None

    def fit(self, support: Support) -> AggregateScorer:
        return AggregateScorer(self.model, fit_episode(self.model, support, self.cache))


def route(model: AggregateModel, support: Support) -> int:
    """Index of the learner whose centroid is nearest to h(D_trn)."""
    if model.centroids is None:
        raise ClusteringError("nearest-cluster routing needs a model with centroids")
    j = assign(model.centroids, embed_support(support, model.centroids.embedding))
    logger.debug("nearest cluster: routed episode to learner %d", j)
    return j


@dataclass(frozen=True, eq=False)
class NearestClusterPredictor:
    model: AggregateModel
    method: MethodId = MethodId.NEAREST_CLUSTER

    def __post_init__(self) -> None:
        if self.model.centroids is None:
            raise ClusteringError("nearest_cluster requires a checkpoint with centroids")

    def fit(self, support: Support) -> LogitScorer:
        j = route(self.model, support)
        learner = self.model.learners[j]
        fitted = inner_train(learner, support, self.model.tcfg).detached()
        return LogitScorer(fitted, learner.activation, cluster=j)


def nearest_cluster_predict(
    model: AggregateModel, d_trn: Support, x: np.ndarray
) -> Union[bool, np.ndarray]:
    out = NearestClusterPredictor(model).fit(d_trn).predict(x)
    return bool(out[0]) if np.ndim(x) == 1 else out


def make_predictor(
    method: MethodId,
    learners: Sequence[LearnerInit],
    tcfg: TrainConfig,
    model: Optional[AggregateModel] = None,
    cache: Optional[FitCache] = None,
) -> Predictor:
    """
    Build one method's predictor from trained components. Aggregate methods and
    nearest_cluster need `model`; bagging and single_maml use `learners`.
    """
    method = MethodId(method)
    if method is MethodId.SINGLE_MAML:
        if len(learners) != 1:
            raise ConfigError(
                f"single_maml needs exactly one learner, checkpoint has {len(learners)}"
            )
        return SingleLearnerPredictor(learners[0], tcfg)
    if method is MethodId.HARD_BAGGING:
        return BaggingPredictor(tuple(learners), tcfg, EnsembleMode.HARD, cache)
    if method is MethodId.SOFT_BAGGING:
        return BaggingPredictor(tuple(learners), tcfg, EnsembleMode.SOFT, cache)
    if model is None:
        raise ConfigError(f"{method.value} needs a checkpoint with an aggregator")
    if method is MethodId.NEAREST_CLUSTER:
        return NearestClusterPredictor(model)
    return AggregatePredictor(model, method, cache)

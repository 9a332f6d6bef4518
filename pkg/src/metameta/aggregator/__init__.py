from metameta.aggregator.cache import FitCache
from metameta.aggregator.model import (
    AggregateModel,
    EpisodeFit,
    aggregate_logits,
    aggregate_score,
    fit_episode,
    fit_learners,
    stacked_logits,
)
from metameta.aggregator.network import AggParams, agg_forward, agg_from_config, agg_init
from metameta.aggregator.training import aggregator_batch_loss, train_aggregator

__all__ = [
    "FitCache",
    "AggregateModel",
    "EpisodeFit",
    "aggregate_logits",
    "aggregate_score",
    "fit_episode",
    "fit_learners",
    "stacked_logits",
    "AggParams",
    "agg_forward",
    "agg_from_config",
    "agg_init",
    "aggregator_batch_loss",
    "train_aggregator",
]

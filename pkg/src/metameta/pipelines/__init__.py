from metameta.pipelines.baselines import (
    train_baseline_ensemble,
    train_single_maml,
    train_whole_data_aggregator,
)
from metameta.pipelines.end_to_end import e2e_batch_loss, joint_params, train_end_to_end
from metameta.pipelines.fiveway import fiveway_predict, fiveway_scores
from metameta.pipelines.predictors import (
    AggregatePredictor,
    BaggingPredictor,
    EpisodeScorer,
    NearestClusterPredictor,
    Predictor,
    SingleLearnerPredictor,
    ensemble_decide,
    ensemble_predict,
    make_predictor,
    nearest_cluster_predict,
    route,
)
from metameta.pipelines.three_step import train_three_step

__all__ = [
    "train_baseline_ensemble",
    "train_single_maml",
    "train_whole_data_aggregator",
    "e2e_batch_loss",
    "joint_params",
    "train_end_to_end",
    "fiveway_predict",
    "fiveway_scores",
    "AggregatePredictor",
    "BaggingPredictor",
    "EpisodeScorer",
    "NearestClusterPredictor",
    "Predictor",
    "SingleLearnerPredictor",
    "ensemble_decide",
    "ensemble_predict",
    "make_predictor",
    "nearest_cluster_predict",
    "route",
    "train_three_step",
]

from metameta.aggregator import AggregateModel, aggregate_score
from metameta.config import ExperimentConfig, load_experiment_config
from metameta.eval import EvalReport, evaluate
from metameta.learner import LearnerInit, inner_train, maml_train
from metameta.pipelines import train_end_to_end, train_three_step
from metameta.problems import ClassBank, ProblemDistribution

__all__ = [
    "AggregateModel",
    "aggregate_score",
    "ExperimentConfig",
    "load_experiment_config",
    "EvalReport",
    "evaluate",
    "LearnerInit",
    "inner_train",
    "maml_train",
    "train_end_to_end",
    "train_three_step",
    "ClassBank",
    "ProblemDistribution",
]

from metameta.problems.distribution import ProblemDistribution
from metameta.problems.modal import generate_modal_bank, split_bank, split_sizes
from metameta.problems.mmfb import (
    decode_feature_bank,
    encode_feature_bank,
    load_feature_bank,
    save_feature_bank,
)
from metameta.problems.models import ClassBank, Example, FiveWayProblem, Problem, stack_examples
from metameta.problems.sampler import sample_fiveway, sample_problem, sample_problem_routed

__all__ = [
    "ProblemDistribution",
    "generate_modal_bank",
    "split_bank",
    "split_sizes",
    "decode_feature_bank",
    "encode_feature_bank",
    "load_feature_bank",
    "save_feature_bank",
    "ClassBank",
    "Example",
    "FiveWayProblem",
    "Problem",
    "stack_examples",
    "sample_fiveway",
    "sample_problem",
    "sample_problem_routed",
]

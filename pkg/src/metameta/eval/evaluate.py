from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from metameta.config import EpisodeConfig
from metameta.errors import ConfigError
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.pipelines.fiveway import fiveway_predict
from metameta.pipelines.predictors import Predictor
from metameta.problems.models import ClassBank
from metameta.problems.sampler import sample_fiveway, sample_problem
from metameta.types import MethodId
from metameta.utils import parallel_map

logger = get_logger(__name__)

Z_95 = 1.96


@dataclass(frozen=True)
class EvalReport:
    method: MethodId
    k: int
    n_problems: int
    per_problem_accuracy: Tuple[float, ...] = field(repr=False)
    mean: float
    ci95_halfwidth: float
    seed: int
    wall_time_s: float

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "k": self.k,
            "n_problems": self.n_problems,
            "mean": self.mean,
            "ci95_halfwidth": self.ci95_halfwidth,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }


def confidence_interval(per_problem_accuracy: Sequence[float]) -> Tuple[float, float]:
    """Normal approximation: mean +- 1.96 s / sqrt(n), s with the n - 1 denominator."""
    values = np.asarray(per_problem_accuracy, dtype=np.float64)
    n = values.size
    if n < 2:
        raise ConfigError(f"a confidence interval needs at least 2 problems, got {n}")
    mean = float(values.mean())
    if np.all(values == values[0]):
        return mean, 0.0
    s = float(values.std(ddof=1))
    return mean, Z_95 * s / math.sqrt(n)


def _report(
    method: MethodId, k: int, accs: Sequence[float], seed: int, started: float
) -> EvalReport:
    mean, halfwidth = confidence_interval(accs)
    report = EvalReport(
        method=MethodId(method),
        k=k,
        n_problems=len(accs),
        per_problem_accuracy=tuple(float(a) for a in accs),
        mean=mean,
        ci95_halfwidth=halfwidth,
        seed=seed,
        wall_time_s=time.perf_counter() - started,
    )
    logger.info(
        "%s (k=%d): %.2f +- %.2f over %d problems",
        report.method.value,
        k,
        100 * mean,
        100 * halfwidth,
        report.n_problems,
    )
    return report


def evaluate(
    predictor: Predictor,
    bank: ClassBank,
    cfg: EpisodeConfig,
    n_problems: int,
    rng: Rng,
    k: int = 1,
    seed: int = 0,
    threads: int = 1,
) -> EvalReport:
    """
    Accuracy of `predictor` on the query sets of `n_problems` fresh episodes.

    Episode i is drawn from `rng.child(i)`, so results do not depend on `threads`.
    """
    if n_problems < 2:
        raise ConfigError(f"n_problems must be >= 2 for a confidence interval, got {n_problems}")
    started = time.perf_counter()

    def one(i: int) -> float:
        problem = sample_problem(bank, cfg, rng.child(i))
        x, y = problem.test_arrays
        predicted = np.asarray(predictor.fit(problem.train_set).predict(x), dtype=bool)
        return float(np.mean(predicted == (y == 1)))

    accs = parallel_map(one, range(n_problems), threads)
    return _report(predictor.method, k, accs, seed, started)


def evaluate_fiveway(
    predictor: Predictor,
    bank: ClassBank,
    n_episodes: int,
    rng: Rng,
    k: int = 1,
    seed: int = 0,
    threads: int = 1,
) -> EvalReport:
    """Five-way accuracy, per episode over its 75 queries."""
    if n_episodes < 2:
        raise ConfigError(f"n_episodes must be >= 2 for a confidence interval, got {n_episodes}")
    started = time.perf_counter()

    def one(i: int) -> float:
        fw = sample_fiveway(bank, rng.child(i))
        return float(np.mean(fiveway_predict(predictor, fw) == fw.query_labels))

    accs = parallel_map(one, range(n_episodes), threads)
    return _report(predictor.method, k, accs, seed, started)

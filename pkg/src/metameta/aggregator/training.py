from __future__ import annotations

from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from metameta.aggregator.model import AggregateModel, fit_episode
from metameta.aggregator.network import AggParams, agg_forward
from metameta.config import MamlConfig
from metameta.learner import PlateauStopper, take_batch
from metameta.logger import get_logger
from metameta.numerics import ParamSet, adam_init, adam_step, mean_cross_entropy, value_and_grad
from metameta.numerics.rng import Rng
from metameta.problems.models import Problem

logger = get_logger(__name__)

# (embedding, learner logits on D_tst [n, 2k], labels [n])
_Frozen = Tuple[np.ndarray, np.ndarray, np.ndarray]


def _freeze_batch(model: AggregateModel, batch: Sequence[Problem]) -> List[_Frozen]:
    out: List[_Frozen] = []
    for problem in batch:
        fit = fit_episode(model, problem.train_arrays)
        x, y = problem.test_arrays
        out.append((fit.embedding, np.asarray(fit.learner_logits(x)), y))
    return out


def aggregator_batch_loss(
    params: ParamSet,
    agg: AggParams,
    frozen: Sequence[_Frozen],
    dropout_rng: Optional[Rng] = None,
):
    total = 0.0
    for b, (embedding, logits, y) in enumerate(frozen):
        drng = None if dropout_rng is None else dropout_rng.child(b)
        out = agg_forward(agg, embedding, logits, dropout_rng=drng, params=params)
        total = total + mean_cross_entropy(out, y)
    return total / len(frozen)


def train_aggregator(
    problem_stream: Iterator[Problem],
    model: AggregateModel,
    mcfg: MamlConfig,
    rng: Rng,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> AggParams:
    """
    Learn θ_g with the learners frozen: learner scores are computed numerically
    per problem, so no gradient ever reaches a learner initialization.
    """
    if mcfg.meta_iterations == 0:
        return model.agg

    stream = iter(problem_stream)
    agg = model.agg
    params = agg.params.detached()
    state = adam_init(params, mcfg.meta_lr, weight_decay=mcfg.weight_decay)
    stopper = PlateauStopper(mcfg.patience)
    dropout_rng = rng.spawn("dropout")

    for it in range(mcfg.meta_iterations):
        frozen = _freeze_batch(model, take_batch(stream, mcfg.batch_size))
        loss, grads = value_and_grad(
            lambda p: aggregator_batch_loss(p, agg, frozen, dropout_rng.child(it)), params
        )
        state, params = adam_step(state, params, grads)
        loss = float(loss)
        if on_step is not None:
            on_step(it, loss)
        if it % mcfg.log_every == 0 or it == mcfg.meta_iterations - 1:
            logger.info("aggregator iteration %d meta-loss %.6f", it, loss)
        if stopper.update(loss):
            logger.info("aggregator stopped at iteration %d: no improvement", it)
            break

    return agg.with_params(params)

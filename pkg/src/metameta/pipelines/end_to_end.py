from __future__ import annotations

from typing import Optional, Sequence

from metameta.aggregator import AggregateModel, agg_forward, agg_from_config, stacked_logits
from metameta.clustering import EmbeddingSpec, embed_support
from metameta.config import AggregatorConfig, LearnerConfig, MetaConfig
from metameta.errors import ConfigError
from metameta.learner import (
    LearnerInit,
    PlateauStopper,
    StepHook,
    inner_train,
    phase_hook,
    take_batch,
)
from metameta.logger import get_logger
from metameta.numerics import ParamSet, adam_init, adam_step, mean_cross_entropy, value_and_grad
from metameta.numerics.rng import Rng
from metameta.problems.distribution import ProblemDistribution
from metameta.problems.models import Problem
from metameta.types import GradOrder

logger = get_logger(__name__)

AGG_PREFIX = "g"


def learner_prefix(i: int) -> str:
    return f"learner{i}"


def joint_params(model: AggregateModel) -> ParamSet:
    """⟨θ_g, θ_1^T, …, θ_k^T⟩ as one namespaced ParamSet."""
    parts = [model.agg.params.prefixed(AGG_PREFIX)]
    parts.extend(lr.params.prefixed(learner_prefix(i)) for i, lr in enumerate(model.learners))
    return ParamSet.concat(parts)


def split_joint(model: AggregateModel, joint: ParamSet) -> AggregateModel:
    learners = [
        lr.with_params(joint.select(learner_prefix(i))) for i, lr in enumerate(model.learners)
    ]
    agg = model.agg.with_params(joint.select(AGG_PREFIX))
    return AggregateModel(tuple(learners), model.tcfg, agg, model.centroids, model.embedding)


def e2e_batch_loss(
    joint: ParamSet,
    model: AggregateModel,
    batch: Sequence[Problem],
    order: GradOrder = GradOrder.SECOND,
    dropout_rng: Optional[Rng] = None,
):
    """
    Batch meta-loss of g*: mean over problems of the query cross-entropy, as a
    function of every learner initialization and of θ_g at once.
    """
    g_params = joint.select(AGG_PREFIX)
    total = 0.0
    for b, problem in enumerate(batch):
        support = problem.train_arrays
        fitted = [
            inner_train(lr, support, model.tcfg, order, params=joint.select(learner_prefix(i)))
            for i, lr in enumerate(model.learners)
        ]
        x, y = problem.test_arrays
        logits = stacked_logits(fitted, x, model.activation)
        embedding = embed_support(support, model.embedding)
        drng = None if dropout_rng is None else dropout_rng.child(b)
        out = agg_forward(model.agg, embedding, logits, dropout_rng=drng, params=g_params)
        total = total + mean_cross_entropy(out, y)
    return total / len(batch)


def random_model(
    feature_dim: int,
    k: int,
    lcfg: LearnerConfig,
    agg_cfg: AggregatorConfig,
    rng: Rng,
    embedding: EmbeddingSpec = EmbeddingSpec(),
) -> AggregateModel:
    """k learners from distinct child streams plus a fresh aggregator."""
    arch = lcfg.arch(feature_dim)
    learner_rng = rng.spawn("learners")
    learners = tuple(
        LearnerInit.random(arch, learner_rng.child(i), lcfg.activation) for i in range(k)
    )
    agg = agg_from_config(feature_dim, k, agg_cfg, rng.spawn("aggregator"))
    return AggregateModel(learners, lcfg.train_config(), agg, None, embedding)


def train_end_to_end(
    dist: ProblemDistribution,
    cfg: MetaConfig,
    lcfg: LearnerConfig,
    rng: Rng,
    agg_cfg: AggregatorConfig = AggregatorConfig(),
    embedding: EmbeddingSpec = EmbeddingSpec(),
    warm_start: Optional[AggregateModel] = None,
    on_step: Optional[StepHook] = None,
) -> AggregateModel:
    """
    Joint Adam descent on the batch meta-loss of the aggregate scoring function.

    From a random start this tends to collapse the learners onto one solution;
    `warm_start` continues from a model produced by the three-step pipeline and
    keeps its centroids.
    """
    if cfg.k < 1 or cfg.batch_size < 1:
        raise ConfigError("end-to-end training needs k >= 1 and batch_size >= 1")

    if warm_start is None:
        model = random_model(dist.feature_dim, cfg.k, lcfg, agg_cfg, rng, embedding)
    else:
        if warm_start.k != cfg.k:
            raise ConfigError(
                f"warm-start model has {warm_start.k} learners but meta.k is {cfg.k}"
            )
        if warm_start.feature_dim != dist.feature_dim:
            raise ConfigError(
                f"warm-start model expects feature_dim {warm_start.feature_dim}, "
                f"data has {dist.feature_dim}"
            )
        model = warm_start
        logger.info("end-to-end training warm-started from a %d-learner model", model.k)

    if cfg.meta_iterations == 0:
        return model

    stream = dist.stream(rng.spawn("problems"))
    dropout_rng = rng.spawn("dropout")
    params = joint_params(model).detached()
    state = adam_init(params, cfg.meta_lr, weight_decay=cfg.weight_decay)
    stopper = PlateauStopper(cfg.patience)
    hook = phase_hook(on_step, "e2e")

    for it in range(cfg.meta_iterations):
        batch = take_batch(stream, cfg.batch_size)
        loss, grads = value_and_grad(
            lambda p: e2e_batch_loss(p, model, batch, cfg.order, dropout_rng.child(it)), params
        )
        state, params = adam_step(state, params, grads)
        loss = float(loss)
        if hook is not None:
            hook(it, loss)
        if it % cfg.log_every == 0 or it == cfg.meta_iterations - 1:
            logger.info("end-to-end iteration %d meta-loss %.6f", it, loss)
        if stopper.update(loss):
            logger.info("end-to-end stopped at iteration %d: no improvement", it)
            break

    return split_joint(model, params)

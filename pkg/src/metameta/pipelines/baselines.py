from __future__ import annotations

from typing import Optional, Sequence, Tuple

from metameta.aggregator import AggregateModel, agg_from_config, train_aggregator
from metameta.clustering import EmbeddingSpec
from metameta.config import AggregatorConfig, LearnerConfig, MamlConfig
from metameta.errors import ConfigError
from metameta.learner import LearnerInit, StepHook, maml_train, phase_hook
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.problems.distribution import ProblemDistribution

logger = get_logger(__name__)


def train_baseline_ensemble(
    dist: ProblemDistribution,
    k: int,
    lcfg: LearnerConfig,
    mcfg: MamlConfig,
    rng: Rng,
    on_step: Optional[StepHook] = None,
) -> Tuple[LearnerInit, ...]:
    """k independent MAML runs on the whole distribution, each with its own streams."""
    if k < 1:
        raise ConfigError("an ensemble needs k >= 1")
    arch = lcfg.arch(dist.feature_dim)
    init_rng = rng.spawn("learners")
    stream_rng = rng.spawn("problems")
    members = []
    for i in range(k):
        logger.info("training whole-data learner %d of %d", i + 1, k)
        init = LearnerInit.random(arch, init_rng.child(i), lcfg.activation)
        members.append(
            maml_train(
                dist.stream(stream_rng.child(i)),
                init,
                lcfg.train_config(),
                mcfg,
                on_step=phase_hook(on_step, f"learner{i}"),
            )
        )
    return tuple(members)


def train_single_maml(
    dist: ProblemDistribution,
    lcfg: LearnerConfig,
    mcfg: MamlConfig,
    rng: Rng,
    on_step: Optional[StepHook] = None,
) -> LearnerInit:
    return train_baseline_ensemble(dist, 1, lcfg, mcfg, rng, on_step)[0]


def train_whole_data_aggregator(
    dist: ProblemDistribution,
    learners: Sequence[LearnerInit],
    lcfg: LearnerConfig,
    agg_cfg: AggregatorConfig,
    agg_mcfg: MamlConfig,
    rng: Rng,
    embedding: EmbeddingSpec = EmbeddingSpec(),
    on_step: Optional[StepHook] = None,
) -> AggregateModel:
    """An aggregator over whole-data learners: the meta-meta classifier without clustering."""
    agg = agg_from_config(dist.feature_dim, len(learners), agg_cfg, rng.spawn("aggregator"))
    model = AggregateModel(tuple(learners), lcfg.train_config(), agg, None, embedding)
    agg = train_aggregator(
        dist.stream(rng.spawn("aggregator-problems")),
        model,
        agg_mcfg,
        rng.spawn("aggregator-train"),
        on_step=phase_hook(on_step, "aggregator"),
    )
    return model.with_agg(agg)

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from metameta.aggregator import AggregateModel, agg_from_config, train_aggregator
from metameta.clustering import (
    Centroids,
    EmbeddingSpec,
    cluster_pools,
    embed_problem,
    kmeans,
    partition_classes,
)
from metameta.config import (
    AggregatorConfig,
    ClusteringConfig,
    LearnerConfig,
    MamlConfig,
    MetaConfig,
    TrainConfig,
)
from metameta.errors import ConfigError
from metameta.learner import LearnerInit, StepHook, maml_train, phase_hook
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.problems.distribution import ProblemDistribution
from metameta.utils import parallel_map

logger = get_logger(__name__)


def cluster_corpus(
    dist: ProblemDistribution,
    k: int,
    ccfg: ClusteringConfig,
    rng: Rng,
    threads: int = 1,
) -> Centroids:
    """Step 1: embed a corpus of sampled problems and run k-means on it."""
    spec = EmbeddingSpec(ccfg.embedding)
    corpus_rng = rng.spawn("corpus")
    points = [
        embed_problem(dist.sample(corpus_rng.child(i)), spec) for i in range(ccfg.corpus_size)
    ]
    result = kmeans(
        points,
        k,
        max_iters=ccfg.max_iters,
        restarts=ccfg.restarts,
        rng=rng.spawn("kmeans"),
        embedding=spec,
        threads=threads,
    )
    logger.info(
        "k-means on %d embedded problems: k=%d inertia %.4f (restart %d, %d iterations)",
        len(points),
        k,
        result.centroids.inertia,
        result.restart,
        result.iterations,
    )
    return result.centroids


def route_classes(
    dist: ProblemDistribution,
    centroids: Centroids,
    ccfg: ClusteringConfig,
    rng: Rng,
) -> List[List[int]]:
    """Step 2: positive-class pools, one per cluster."""
    partition = partition_classes(
        dist.bank, centroids, centroids.embedding, ccfg.samples_per_class, rng.spawn("partition")
    )
    pools = cluster_pools(partition, centroids.k)
    logger.info("class pools per cluster: %s", [len(p) for p in pools])
    return pools


@dataclass(frozen=True, eq=False)
class ClusterJob:
    index: int
    dist: ProblemDistribution
    pool: Tuple[int, ...]
    init: LearnerInit
    tcfg: TrainConfig
    mcfg: MamlConfig
    stream_rng: Rng


def train_cluster(
    job: ClusterJob, on_step: Optional[Callable[[int, float], None]] = None
) -> Tuple[LearnerInit, List[Tuple[int, float]]]:
    """MAML on one cluster's problems; returns the learner and its (iteration, loss) curve."""
    curve: List[Tuple[int, float]] = []

    def record(it: int, loss: float) -> None:
        curve.append((it, loss))
        if on_step is not None:
            on_step(it, loss)

    logger.info("training learner %d on %d positive classes", job.index, len(job.pool))
    learner = maml_train(
        job.dist.stream(job.stream_rng, positive_pool=job.pool),
        job.init,
        job.tcfg,
        job.mcfg,
        on_step=record,
    )
    return learner, curve


def train_cluster_learners(
    dist: ProblemDistribution,
    pools: Sequence[Sequence[int]],
    lcfg: LearnerConfig,
    mcfg: MamlConfig,
    rng: Rng,
    on_step: Optional[StepHook] = None,
    threads: int = 1,
) -> Tuple[LearnerInit, ...]:
    """
    Step 3: one MAML learner per cluster; positives come from the cluster's
    pool, negatives from the whole bank.

    With `threads > 1` clusters train in worker processes and their curves are
    reported to `on_step` afterwards, in cluster order.
    """
    arch = lcfg.arch(dist.feature_dim)
    init_rng = rng.spawn("learners")
    stream_rng = rng.spawn("cluster-problems")
    jobs = [
        ClusterJob(
            index=j,
            dist=dist,
            pool=tuple(pool),
            init=LearnerInit.random(arch, init_rng.child(j), lcfg.activation),
            tcfg=lcfg.train_config(),
            mcfg=mcfg,
            stream_rng=stream_rng.child(j),
        )
        for j, pool in enumerate(pools)
    ]
    if threads <= 1:
        results = [train_cluster(job, phase_hook(on_step, f"learner{job.index}")) for job in jobs]
    else:
        # autograd's trace stack is process-global, so nested tracing stays out of threads
        results = parallel_map(train_cluster, jobs, threads, processes=True)
        if on_step is not None:
            for job, (_, curve) in zip(jobs, results):
                for it, loss in curve:
                    on_step(f"learner{job.index}", it, loss)
    return tuple(learner for learner, _ in results)


def train_three_step(
    dist: ProblemDistribution,
    cfg: MetaConfig,
    lcfg: LearnerConfig,
    ccfg: ClusteringConfig,
    rng: Rng,
    agg_cfg: AggregatorConfig = AggregatorConfig(),
    agg_mcfg: Optional[MamlConfig] = None,
    threads: int = 1,
    on_step: Optional[StepHook] = None,
) -> AggregateModel:
    """
    Cluster problems, specialise one learner per cluster, then learn g over
    unrestricted problems with the learners frozen.
    """
    if cfg.k < 1 or cfg.batch_size < 1:
        raise ConfigError("three-step training needs k >= 1 and batch_size >= 1")

    logger.info("three-step: clustering (k=%d)", cfg.k)
    centroids = cluster_corpus(dist, cfg.k, ccfg, rng, threads)

    logger.info("three-step: partitioning classes")
    pools = route_classes(dist, centroids, ccfg, rng)

    logger.info("three-step: training %d cluster learners", cfg.k)
    learners = train_cluster_learners(dist, pools, lcfg, cfg.maml(), rng, on_step, threads)

    logger.info("three-step: training the aggregator")
    agg = agg_from_config(dist.feature_dim, cfg.k, agg_cfg, rng.spawn("aggregator"))
    model = AggregateModel(learners, lcfg.train_config(), agg, centroids, centroids.embedding)
    agg = train_aggregator(
        dist.stream(rng.spawn("aggregator-problems")),
        model,
        agg_mcfg or cfg.maml(),
        rng.spawn("aggregator-train"),
        on_step=phase_hook(on_step, "aggregator"),
    )
    return model.with_agg(agg)

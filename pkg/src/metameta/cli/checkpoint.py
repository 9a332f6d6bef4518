from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

from metameta.aggregator import AggParams, AggregateModel, FitCache
from metameta.clustering import Centroids, EmbeddingSpec
from metameta.config import ExperimentConfig, TrainConfig, parse_experiment_config
from metameta.errors import CheckpointError, ClusteringError, ConfigError, MetaMetaError
from metameta.learner import LearnerInit
from metameta.pipelines.predictors import Predictor, make_predictor
from metameta.types import MethodId, TrainMethod

FORMAT_VERSION = "1.0"
SUPPORTED_MAJOR = 1

_AGGREGATE_TRAINING = {
    MethodId.META_META: (TrainMethod.THREE_STEP, TrainMethod.E2E),
    MethodId.MMC_WHOLE_DATA: (TrainMethod.ENSEMBLE,),
}


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Everything a training run produced, plus the config it ran with."""

    method: TrainMethod
    config: ExperimentConfig
    learners: Tuple[LearnerInit, ...]
    tcfg: TrainConfig
    agg: Optional[AggParams] = None
    centroids: Optional[Centroids] = None
    embedding: EmbeddingSpec = EmbeddingSpec()
    seed: int = 0
    seed_source: str = "config"

    def __post_init__(self) -> None:
        if not self.learners:
            raise CheckpointError("a checkpoint must hold at least one learner")

    @classmethod
    def from_model(
        cls,
        method: TrainMethod,
        config: ExperimentConfig,
        model: AggregateModel,
        seed_source: str = "config",
    ) -> Checkpoint:
        return cls(
            method=method,
            config=config,
            learners=model.learners,
            tcfg=model.tcfg,
            agg=model.agg,
            centroids=model.centroids,
            embedding=model.embedding,
            seed=config.seed,
            seed_source=seed_source,
        )

    @property
    def k(self) -> int:
        return len(self.learners)

    @property
    def feature_dim(self) -> int:
        return self.learners[0].feature_dim

    def model(self) -> Optional[AggregateModel]:
        if self.agg is None:
            return None
        try:
            return AggregateModel(
                self.learners, self.tcfg, self.agg, self.centroids, self.embedding
            )
        except MetaMetaError as e:
            raise CheckpointError(f"inconsistent checkpoint: {e}") from e

    def unsupported_reason(self, method: MethodId) -> Optional[str]:
        """Why this checkpoint cannot serve `method`, or None when it can."""
        method = MethodId(method)
        if method is MethodId.SINGLE_MAML and self.k != 1:
            return f"single_maml needs a 1-learner checkpoint, this one has {self.k}"
        if method is MethodId.NEAREST_CLUSTER and self.centroids is None:
            return f"nearest_cluster needs centroids; a {self.method.value} checkpoint has none"
        if method in _AGGREGATE_TRAINING:
            if self.agg is None:
                return f"{method.value} needs an aggregator; this checkpoint has none"
            if self.method not in _AGGREGATE_TRAINING[method]:
                allowed = ", ".join(m.value for m in _AGGREGATE_TRAINING[method])
                return f"{method.value} needs a checkpoint trained with {allowed}"
        return None

    def supported_methods(self) -> List[MethodId]:
        return [m for m in MethodId if self.unsupported_reason(m) is None]

    def predictor(self, method: MethodId, cache: Optional[FitCache] = None) -> Predictor:
        reason = self.unsupported_reason(method)
        if reason is not None:
            if MethodId(method) is MethodId.NEAREST_CLUSTER:
                raise ClusteringError(reason)
            raise ConfigError(reason)
        return make_predictor(method, self.learners, self.tcfg, self.model(), cache)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "method": self.method.value,
            "config": self.config.model_dump(mode="json"),
            "seed": {"value": self.seed, "source": self.seed_source},
            "train": self.tcfg.model_dump(mode="json"),
            "embedding": self.embedding.to_dict(),
            "centroids": None if self.centroids is None else self.centroids.to_dict(),
            "learners": [lr.to_dict() for lr in self.learners],
            "agg": None if self.agg is None else self.agg.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Checkpoint:
        check_format_version(data.get("format_version"))
        try:
            centroids = data.get("centroids")
            agg = data.get("agg")
            seed = data.get("seed") or {}
            return cls(
                method=TrainMethod(data["method"]),
                config=parse_experiment_config(data["config"]),
                learners=tuple(LearnerInit.from_dict(d) for d in data["learners"]),
                tcfg=TrainConfig.model_validate(data["train"]),
                agg=None if agg is None else AggParams.from_dict(agg),
                centroids=None if centroids is None else Centroids.from_dict(centroids),
                embedding=EmbeddingSpec.from_dict(data["embedding"]),
                seed=int(seed.get("value", 0)),
                seed_source=str(seed.get("source", "config")),
            )
        except CheckpointError:
            raise
        except (KeyError, TypeError, ValueError, MetaMetaError) as e:
            raise CheckpointError(f"malformed checkpoint: {e}") from e


def check_format_version(version) -> None:
    if not isinstance(version, str) or "." not in version:
        raise CheckpointError(f"checkpoint has no usable format_version: {version!r}")
    major = version.split(".", 1)[0]
    if not major.isdigit() or int(major) != SUPPORTED_MAJOR:
        raise CheckpointError(
            f"checkpoint format {version} is not readable by format {FORMAT_VERSION}"
        )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(ckpt.to_dict(), sort_keys=True)
    with p.open("w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")
    return p


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {p}: {e.strerror or e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint {p} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise CheckpointError(f"checkpoint {p} must contain a JSON object")
    return Checkpoint.from_dict(data)

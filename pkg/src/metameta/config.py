from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from metameta.errors import ConfigError
from metameta.types import (
    Activation,
    DropoutSemantics,
    EmbeddingKind,
    GradOrder,
    PositiveWeight,
)

SEED_ENV_VAR = "MMC_SEED"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EpisodeConfig(_Section):
    n_neg_train: int = Field(default=50, gt=0, description="Negative images in D_trn.")
    n_pos_test: int = Field(default=50, gt=0, description="Positive images in D_tst.")
    n_neg_test: int = Field(default=50, gt=0, description="Negative images in D_tst.")
    n_neg_classes: int = Field(
        default=50, gt=0, description="Negative classes drawn for D_trn and, again, for D_tst."
    )


class ModalMixtureSpec(_Section):
    feature_dim: int = Field(default=16, gt=0, description="Feature dimension d.")
    modes: int = Field(default=4, gt=0, description="Number of task modes M.")
    signal_radius: float = Field(default=3.0, gt=0, description="Norm r of every class mean.")
    noise_sigma: float = Field(default=1.0, gt=0, description="Per-coordinate noise sigma.")
    classes_per_mode: int = Field(default=64, gt=0, description="Classes C generated per mode.")
    meta_test_fraction: float = Field(
        default=0.25, ge=0, lt=1, description="Share of each mode's classes held out for meta-test."
    )
    examples_per_class: int = Field(default=100, gt=0, description="Images stored per class.")

    @property
    def subspace_dim(self) -> int:
        return self.feature_dim // self.modes

    @model_validator(mode="after")
    def _check_blocks(self) -> ModalMixtureSpec:
        if self.subspace_dim < 1:
            raise ValueError("modes must not exceed feature_dim (empty signal subspace)")
        return self


class TrainConfig(_Section):
    inner_lr: float = Field(default=0.01, gt=0, description="Inner learning rate lambda.")
    inner_steps: int = Field(default=5, ge=0, description="Inner gradient steps m.")
    positive_weight: PositiveWeight = Field(
        default=PositiveWeight.BALANCED,
        description="balanced: the positive example weighs as much as all negatives together.",
    )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            inner_lr=self.inner_lr,
            inner_steps=self.inner_steps,
            positive_weight=self.positive_weight,
        )


class LearnerConfig(TrainConfig):
    hidden_dims: List[int] = Field(default_factory=lambda: [32], description="Hidden widths.")
    activation: Activation = Field(default=Activation.RELU)

    @model_validator(mode="after")
    def _check_dims(self) -> LearnerConfig:
        if any(d <= 0 for d in self.hidden_dims):
            raise ValueError("hidden_dims must be positive")
        return self

    def arch(self, feature_dim: int) -> List[int]:
        return [feature_dim, *self.hidden_dims, 2]


class MamlConfig(_Section):
    meta_lr: float = Field(default=1e-3, gt=0, description="Adam learning rate alpha.")
    batch_size: int = Field(default=8, gt=0, description="Problems per meta-batch b.")
    meta_iterations: int = Field(default=2000, ge=0)
    order: GradOrder = Field(default=GradOrder.SECOND)
    weight_decay: float = Field(default=0.0, ge=0, description="L2 term added to outer gradients.")
    patience: Optional[int] = Field(
        default=None,
        gt=0,
        description="Stop once the smoothed meta-loss has not improved for this many iterations.",
    )
    log_every: int = Field(default=50, gt=0)


class MetaConfig(_Section):
    k: int = Field(default=4, ge=1, description="Number of learners.")
    batch_size: int = Field(default=8, ge=1, description="Problems per meta-batch b.")
    meta_lr: float = Field(default=1e-3, gt=0)
    meta_iterations: int = Field(default=2000, ge=0)
    order: GradOrder = Field(default=GradOrder.SECOND)
    weight_decay: float = Field(default=0.0, ge=0)
    patience: Optional[int] = Field(default=None, gt=0)
    log_every: int = Field(default=50, gt=0)

    def maml(self) -> MamlConfig:
        return MamlConfig(
            meta_lr=self.meta_lr,
            batch_size=self.batch_size,
            meta_iterations=self.meta_iterations,
            order=self.order,
            weight_decay=self.weight_decay,
            patience=self.patience,
            log_every=self.log_every,
        )


class ClusteringConfig(_Section):
    embedding: EmbeddingKind = Field(default=EmbeddingKind.POSITIVE_ABS)
    corpus_size: int = Field(default=2000, gt=0, description="Problems embedded for k-means.")
    max_iters: int = Field(default=100, gt=0)
    restarts: int = Field(default=8, gt=0)
    samples_per_class: int = Field(default=5, ge=1, description="Sample problems used to route a class.")


class AggregatorConfig(_Section):
    hidden_dims: List[int] = Field(default_factory=lambda: [256, 256])
    dropout_input: float = Field(default=0.9, ge=0, le=1)
    dropout_hidden: float = Field(default=0.6, ge=0, le=1)
    dropout_semantics: DropoutSemantics = Field(
        default=DropoutSemantics.KEEP,
        description="keep: figures are keep probabilities; drop: they are drop probabilities.",
    )
    meta_iterations: Optional[int] = Field(default=None, ge=0)
    meta_lr: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_dropout(self) -> AggregatorConfig:
        if max(self.drop_probabilities()) >= 1.0:
            raise ValueError("dropout would drop every unit")
        return self

    def drop_probabilities(self) -> tuple:
        if self.dropout_semantics is DropoutSemantics.KEEP:
            return 1.0 - self.dropout_input, 1.0 - self.dropout_hidden
        return self.dropout_input, self.dropout_hidden


class EvalConfig(_Section):
    n_problems: int = Field(default=1000, ge=2)
    fiveway_episodes: int = Field(default=600, ge=2)


class ModalDataConfig(_Section):
    kind: Literal["modal"] = "modal"
    spec: ModalMixtureSpec = Field(default_factory=ModalMixtureSpec)


class FileDataConfig(_Section):
    kind: Literal["mmfb"] = "mmfb"
    path: str = Field(description="MMFB bank split into meta-train/meta-test classes.")
    meta_test_fraction: float = Field(default=0.25, gt=0, lt=1)
    test_path: Optional[str] = Field(
        default=None, description="Separate meta-test bank (cross-domain); overrides the split."
    )


DataConfig = Annotated[Union[ModalDataConfig, FileDataConfig], Field(discriminator="kind")]


class ExperimentConfig(_Section):
    data: DataConfig = Field(default_factory=ModalDataConfig)
    episode: EpisodeConfig = Field(default_factory=EpisodeConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    meta: MetaConfig = Field(default_factory=MetaConfig)
    clustering: ClusteringConfig = Field(default_factory=ClusteringConfig)
    aggregator: AggregatorConfig = Field(default_factory=AggregatorConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    seed: int = Field(default=0, ge=0)

    def aggregator_maml(self) -> MamlConfig:
        base = self.meta.maml()
        updates = {}
        if self.aggregator.meta_iterations is not None:
            updates["meta_iterations"] = self.aggregator.meta_iterations
        if self.aggregator.meta_lr is not None:
            updates["meta_lr"] = self.aggregator.meta_lr
        return base.model_copy(update=updates)


def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        loc = ".".join(str(p) for p in item.get("loc", ())) or "<root>"
        parts.append(f"{loc}: {item.get('msg')}")
    return "; ".join(parts)


def parse_experiment_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {_format_validation_error(e)}") from e


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate an experiment JSON file.

    MMC_SEED, when set, replaces the configured seed.
    """
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {p}: {e.strerror or e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {p} must contain a JSON object")

    cfg = parse_experiment_config(data)
    return apply_seed_override(cfg)


def apply_seed_override(cfg: ExperimentConfig) -> ExperimentConfig:
    env = os.environ.get(SEED_ENV_VAR)
    if env is None or env.strip() == "":
        return cfg
    try:
        seed = int(env)
    except ValueError as e:
        raise ConfigError(f"{SEED_ENV_VAR} must be a non-negative integer, got {env!r}") from e
    if seed < 0:
        raise ConfigError(f"{SEED_ENV_VAR} must be a non-negative integer, got {env!r}")
    return cfg.model_copy(update={"seed": seed})

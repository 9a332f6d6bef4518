from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from metameta.config import MamlConfig, TrainConfig
from metameta.errors import ConfigError, ShapeError, StreamExhaustedError
from metameta.logger import get_logger
from metameta.numerics import (
    ParamSet,
    adam_init,
    adam_step,
    mean_cross_entropy,
    mlp_dims,
    mlp_forward,
    mlp_init,
    unroll_inner,
    value_and_grad,
)
from metameta.numerics.rng import Rng
from metameta.problems.models import Example, Problem, stack_examples
from metameta.types import Activation, GradOrder, PositiveWeight

logger = get_logger(__name__)

Support = Union[Sequence[Example], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class LearnerInit:
    """θ_i^T: the initialization inner training starts from, plus its architecture."""

    params: ParamSet
    arch: Tuple[int, ...]
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        if len(self.arch) < 2 or self.arch[-1] != 2:
            raise ConfigError(f"learner arch must end in 2 logits, got {list(self.arch)!r}")
        if tuple(mlp_dims(self.params)) != tuple(self.arch):
            raise ShapeError(
                f"learner params {mlp_dims(self.params)!r} do not match arch {list(self.arch)!r}"
            )

    @classmethod
    def random(
        cls, arch: Sequence[int], rng: Rng, activation: Activation = Activation.RELU
    ) -> LearnerInit:
        return cls(
            params=mlp_init(arch, rng),
            arch=tuple(int(a) for a in arch),
            activation=activation,
        )

    @property
    def feature_dim(self) -> int:
        return self.arch[0]

    def with_params(self, params: ParamSet) -> LearnerInit:
        return LearnerInit(params=params, arch=self.arch, activation=self.activation)

    def to_dict(self) -> dict:
        return {
            "arch": list(self.arch),
            "activation": self.activation.value,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> LearnerInit:
        return cls(
            params=ParamSet.from_dict(data["params"]),
            arch=tuple(int(a) for a in data["arch"]),
            activation=Activation(data["activation"]),
        )


def example_weights(labels: np.ndarray, mode: PositiveWeight) -> np.ndarray:
    """
    Per-example loss weights. balanced: each positive weighs the number of
    negatives in the set; negatives weigh 1.
    """
    labels = np.asarray(labels)
    if PositiveWeight(mode) is PositiveWeight.UNWEIGHTED:
        return np.ones(labels.shape[0], dtype=np.float64)
    n_neg = float(np.sum(labels == 0))
    return np.where(labels == 1, max(n_neg, 1.0), 1.0).astype(np.float64)


def support_arrays(train_set: Support) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stacked (x, y) in canonical row order: the positive first, then rows by
    their raw bytes. Inner training sums over rows in this order, so any
    permutation of the same support set trains to bit-identical parameters.
    """
    if isinstance(train_set, tuple) and len(train_set) == 2 and all(
        isinstance(a, np.ndarray) for a in train_set
    ):
        x, y = train_set
    elif not train_set:
        raise ShapeError("inner training needs a non-empty support set")
    else:
        x, y = stack_examples(train_set)
    x = np.ascontiguousarray(x, dtype=np.float64)
    keys = [(-int(label), row.tobytes()) for label, row in zip(y, x)]
    order = np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.int64)
    return x[order], y[order]


def support_loss(
    params: ParamSet,
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    activation: Activation,
):
    return mean_cross_entropy(mlp_forward(params, x, activation), y, weights)


def inner_train(
    init: LearnerInit,
    train_set: Support,
    cfg: TrainConfig,
    order: GradOrder = GradOrder.SECOND,
    params: Optional[ParamSet] = None,
) -> ParamSet:
    """
    T_i: `cfg.inner_steps` plain gradient steps on the weighted mean
    cross-entropy of the support set, starting from the initialization.

    `params` overrides `init.params` while tracing meta-gradients.
    """
    x, y = support_arrays(train_set)
    if not np.any(y == 1):
        raise ShapeError("support set has no positive example")
    w = example_weights(y, cfg.positive_weight)
    start = init.params if params is None else params
    return unroll_inner(
        start,
        lambda p: support_loss(p, x, y, w, init.activation),
        cfg.inner_lr,
        cfg.inner_steps,
        first_order=GradOrder(order) is GradOrder.FIRST,
    )


def score(
    params: ParamSet, x: np.ndarray, activation: Activation = Activation.RELU
) -> Tuple[float, float]:
    """Raw (no, yes) logits for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"score takes one feature vector, got shape {x.shape}")
    logits = np.asarray(mlp_forward(params, x, activation), dtype=np.float64)
    return float(logits[0]), float(logits[1])


def predict_from_logits(logits: np.ndarray) -> np.ndarray:
    """argmax over (no, yes); ties go to negative."""
    logits = np.asarray(logits)
    return logits[..., 1] > logits[..., 0]


def query_loss(params: ParamSet, problem: Problem, activation: Activation):
    x, y = problem.test_arrays
    return mean_cross_entropy(mlp_forward(params, x, activation), y)


def maml_batch_loss(
    params: ParamSet,
    init: LearnerInit,
    batch: Sequence[Problem],
    tcfg: TrainConfig,
    order: GradOrder = GradOrder.SECOND,
):
    """Mean over problems of the query loss after inner training, as a function of θ^T."""
    total = 0.0
    for problem in batch:
        fitted = inner_train(init, problem.train_arrays, tcfg, order, params=params)
        total = total + query_loss(fitted, problem, init.activation)
    return total / len(batch)


def take_batch(stream: Iterator[Problem], size: int) -> List[Problem]:
    batch: List[Problem] = []
    for _ in range(size):
        try:
            batch.append(next(stream))
        except StopIteration:
            raise StreamExhaustedError(
                f"problem stream ended after {len(batch)} of {size} batch problems"
            ) from None
    return batch


class PlateauStopper:
    """Tracks an exponential moving average of the loss; signals when it stops improving."""

    def __init__(self, patience: Optional[int], smoothing: float = 0.9):
        self.patience = patience
        self.smoothing = smoothing
        self.ema: Optional[float] = None
        self.best = float("inf")
        self.since_best = 0

    def update(self, loss: float) -> bool:
        if self.ema is None:
            self.ema = loss
        else:
            self.ema = self.smoothing * self.ema + (1 - self.smoothing) * loss
        if self.ema < self.best:
            self.best = self.ema
            self.since_best = 0
        else:
            self.since_best += 1
        return self.patience is not None and self.since_best >= self.patience


StepHook = Callable[[str, int, float], None]


def phase_hook(
    on_step: Optional[StepHook], phase: str
) -> Optional[Callable[[int, float], None]]:
    """Bind a (phase, iteration, loss) hook to one training phase."""
    if on_step is None:
        return None
    return lambda it, loss: on_step(phase, it, loss)


def maml_train(
    problem_stream: Iterator[Problem],
    init: LearnerInit,
    tcfg: TrainConfig,
    mcfg: MamlConfig,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> LearnerInit:
    """
    Meta-learn one initialization with Adam on the batch meta-loss.

    `on_step(iteration, loss)` is called after every update.
    """
    if mcfg.meta_iterations == 0:
        return init

    stream = iter(problem_stream)
    params = init.params.detached()
    state = adam_init(params, mcfg.meta_lr, weight_decay=mcfg.weight_decay)
    stopper = PlateauStopper(mcfg.patience)

    for it in range(mcfg.meta_iterations):
        batch = take_batch(stream, mcfg.batch_size)
        loss, grads = value_and_grad(
            lambda p: maml_batch_loss(p, init, batch, tcfg, mcfg.order), params
        )
        state, params = adam_step(state, params, grads)
        loss = float(loss)
        if on_step is not None:
            on_step(it, loss)
        if it % mcfg.log_every == 0 or it == mcfg.meta_iterations - 1:
            logger.info("maml iteration %d meta-loss %.6f", it, loss)
        if stopper.update(loss):
            logger.info("maml stopped at iteration %d: no improvement for %d", it, mcfg.patience)
            break

    return init.with_params(params)

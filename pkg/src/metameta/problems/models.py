from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from metameta.errors import SamplingError, ShapeError
from metameta.types import Label, SplitTag


@dataclass(frozen=True, eq=False)
class Example:
    features: np.ndarray
    label: Label
    class_id: int

    def __repr__(self) -> str:
        return (
            f"Example(class_id={self.class_id}, label={self.label.value}, "
            f"d={self.features.shape[0]})"
        )

    def to_dict(self) -> dict:
        return {
            "features": [float(v) for v in self.features],
            "label": self.label.value,
            "class_id": self.class_id,
        }


def stack_examples(examples: Sequence[Example]) -> Tuple[np.ndarray, np.ndarray]:
    """Row-stacked features [n, d] and label indices [n] (1 = positive)."""
    if not examples:
        raise ShapeError("no examples to stack")
    x = np.stack([e.features for e in examples]).astype(np.float64, copy=False)
    y = np.array([e.label.index for e in examples], dtype=np.int64)
    return x, y


@dataclass(frozen=True, eq=False)
class Problem:
    """
    One one-vs-all episode: support set D_trn and query set D_tst.

    The synthetic mode is kept for diagnostics only and is exposed through the
    `mode_hint` property so that reads can be audited.
    """

    train_set: Tuple[Example, ...]
    test_set: Tuple[Example, ...]
    positive_class: int
    _mode_hint: Optional[int] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        positives = [e for e in self.train_set if e.label is Label.POSITIVE]
        if len(positives) != 1:
            raise SamplingError(
                f"a support set holds exactly one positive example, got {len(positives)}"
            )
        if positives[0].class_id != self.positive_class:
            raise SamplingError(
                f"support positive is class {positives[0].class_id}, "
                f"problem is about class {self.positive_class}"
            )
        if not self.test_set:
            raise ShapeError("a problem needs a non-empty query set")

    @property
    def mode_hint(self) -> Optional[int]:
        return self._mode_hint

    @cached_property
    def positive_examples(self) -> Tuple[Example, ...]:
        return tuple(e for e in self.train_set if e.label is Label.POSITIVE)

    @cached_property
    def train_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return stack_examples(self.train_set)

    @cached_property
    def test_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        return stack_examples(self.test_set)

    def __repr__(self) -> str:
        return (
            f"Problem(positive_class={self.positive_class}, "
            f"n_train={len(self.train_set)}, n_test={len(self.test_set)})"
        )


@dataclass(frozen=True, eq=False)
class FiveWayProblem:
    classes: Tuple[int, ...]
    supports: Tuple[np.ndarray, ...]
    query_features: np.ndarray
    query_labels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.classes) != len(self.supports):
            raise ShapeError("one support per class is required")
        if len(set(self.classes)) != len(self.classes):
            raise ShapeError("five-way classes must be distinct")

    @property
    def n_way(self) -> int:
        return len(self.classes)

    def ova_support(self, i: int) -> Tuple[Example, ...]:
        """Class i's support positive, every other support negative, in class order."""
        out: List[Example] = [Example(self.supports[i], Label.POSITIVE, self.classes[i])]
        for j, (cid, feats) in enumerate(zip(self.classes, self.supports)):
            if j != i:
                out.append(Example(feats, Label.NEGATIVE, cid))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class ClassBank:
    """
    Per-class feature matrices. Immutable after construction.

    `modes` (synthetic ground truth) and `names` (MMFB sidecar) are optional
    diagnostics; no training or evaluation code depends on them.
    """

    feature_dim: int
    classes: Tuple[Tuple[int, np.ndarray], ...]
    split_tag: SplitTag = SplitTag.META_TRAIN
    modes: Mapping[int, int] = field(default_factory=dict)
    names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.feature_dim <= 0:
            raise ShapeError("feature_dim must be positive")
        seen = set()
        for cid, feats in self.classes:
            if cid in seen:
                raise ShapeError(f"duplicate class id {cid}")
            seen.add(cid)
            if feats.ndim != 2 or feats.shape[1] != self.feature_dim:
                raise ShapeError(
                    f"class {cid}: features of shape {feats.shape} do not match "
                    f"feature_dim {self.feature_dim}"
                )
            if feats.shape[0] == 0:
                raise ShapeError(f"class {cid} has no examples")
            if not np.all(np.isfinite(feats)):
                raise ShapeError(f"class {cid} has non-finite features")

    @cached_property
    def _index(self) -> Dict[int, np.ndarray]:
        return {cid: feats for cid, feats in self.classes}

    @property
    def class_ids(self) -> List[int]:
        return [cid for cid, _ in self.classes]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def examples(self, class_id: int) -> np.ndarray:
        try:
            return self._index[class_id]
        except KeyError:
            raise SamplingError(f"class {class_id} is not in this bank") from None

    def subset(self, class_ids: Sequence[int], split_tag: Optional[SplitTag] = None) -> ClassBank:
        wanted = set(class_ids)
        return ClassBank(
            feature_dim=self.feature_dim,
            classes=tuple((cid, f) for cid, f in self.classes if cid in wanted),
            split_tag=split_tag or self.split_tag,
            modes={c: m for c, m in self.modes.items() if c in wanted},
            names={c: n for c, n in self.names.items() if c in wanted},
        )

    def __repr__(self) -> str:
        return (
            f"ClassBank(split={self.split_tag.value}, classes={self.num_classes}, "
            f"feature_dim={self.feature_dim})"
        )

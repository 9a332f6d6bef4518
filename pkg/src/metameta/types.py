from __future__ import annotations

from enum import Enum


class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @property
    def index(self) -> int:
        """Class index used by the 2-logit learners: 0 = no, 1 = yes."""
        return 1 if self is Label.POSITIVE else 0


class SplitTag(str, Enum):
    META_TRAIN = "meta_train"
    META_TEST = "meta_test"


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


class PositiveWeight(str, Enum):
    BALANCED = "balanced"
    UNWEIGHTED = "unweighted"


class GradOrder(str, Enum):
    SECOND = "second"
    FIRST = "first"


class EmbeddingKind(str, Enum):
    POSITIVE_RAW = "positive_raw"
    POSITIVE_ABS = "positive_abs"


class DropoutSemantics(str, Enum):
    DROP = "drop"
    KEEP = "keep"


class EnsembleMode(str, Enum):
    HARD = "hard"
    SOFT = "soft"


class MethodId(str, Enum):
    SINGLE_MAML = "single_maml"
    HARD_BAGGING = "hard_bagging"
    SOFT_BAGGING = "soft_bagging"
    MMC_WHOLE_DATA = "mmc_whole_data"
    NEAREST_CLUSTER = "nearest_cluster"
    META_META = "meta_meta"


class TrainMethod(str, Enum):
    E2E = "e2e"
    THREE_STEP = "three-step"
    SINGLE_MAML = "single-maml"
    ENSEMBLE = "ensemble"

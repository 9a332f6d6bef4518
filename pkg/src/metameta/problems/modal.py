from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from metameta.config import ModalMixtureSpec
from metameta.errors import ConfigError
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.problems.models import ClassBank
from metameta.types import SplitTag

logger = get_logger(__name__)


def mode_block(spec: ModalMixtureSpec, mode: int) -> slice:
    s = spec.subspace_dim
    return slice(mode * s, (mode + 1) * s)


def split_sizes(spec: ModalMixtureSpec) -> Tuple[int, int]:
    """(meta-train, meta-test) classes per mode: ceil(C(1-f)), floor(C f)."""
    n_test = math.floor(spec.classes_per_mode * spec.meta_test_fraction)
    return spec.classes_per_mode - n_test, n_test


def generate_modal_bank(
    spec: ModalMixtureSpec, rng: Rng
) -> Tuple[ClassBank, ClassBank, Dict[int, int]]:
    """
    Synthetic modal mixture: every class belongs to one mode, and its mean lives
    on that mode's coordinate block with entries +-r/sqrt(s).

    Features are rounded to float32 so the bank survives an MMFB round trip
    unchanged.
    """
    if spec.modes * spec.subspace_dim > spec.feature_dim:
        raise ConfigError("modes * subspace_dim exceeds feature_dim")
    n_train, n_test = split_sizes(spec)
    if n_train < 1:
        raise ConfigError("meta_test_fraction leaves no meta-train classes per mode")

    s = spec.subspace_dim
    amp = spec.signal_radius / math.sqrt(s)
    d = spec.feature_dim

    mode_of: Dict[int, int] = {}
    train: List[Tuple[int, np.ndarray]] = []
    test: List[Tuple[int, np.ndarray]] = []

    for m in range(spec.modes):
        mode_rng = rng.child(m)
        order = mode_rng.permutation(spec.classes_per_mode)
        test_slots = set(int(i) for i in order[:n_test])
        for c in range(spec.classes_per_mode):
            cid = m * spec.classes_per_mode + c
            mean = np.zeros(d, dtype=np.float64)
            signs = np.where(mode_rng.random(s) < 0.5, -1.0, 1.0)
            mean[mode_block(spec, m)] = amp * signs
            noise = mode_rng.normal((spec.examples_per_class, d))
            feats = (mean + spec.noise_sigma * noise).astype(np.float32).astype(np.float64)
            mode_of[cid] = m
            (test if c in test_slots else train).append((cid, feats))

    train_bank = ClassBank(
        feature_dim=d,
        classes=tuple(train),
        split_tag=SplitTag.META_TRAIN,
        modes={cid: mode_of[cid] for cid, _ in train},
    )
    test_bank = ClassBank(
        feature_dim=d,
        classes=tuple(test),
        split_tag=SplitTag.META_TEST,
        modes={cid: mode_of[cid] for cid, _ in test},
    )
    logger.info(
        "generated modal mixture: %d modes, %d meta-train / %d meta-test classes",
        spec.modes,
        train_bank.num_classes,
        test_bank.num_classes,
    )
    return train_bank, test_bank, mode_of


def split_bank(bank: ClassBank, meta_test_fraction: float, rng: Rng) -> Tuple[ClassBank, ClassBank]:
    """Class-level split of a file-based bank into meta-train and meta-test banks."""
    if not 0.0 < meta_test_fraction < 1.0:
        raise ConfigError("meta_test_fraction must lie in (0, 1)")
    ids = bank.class_ids
    n_test = math.floor(len(ids) * meta_test_fraction)
    if n_test < 1 or n_test >= len(ids):
        raise ConfigError(
            f"cannot split {len(ids)} classes with meta_test_fraction={meta_test_fraction}"
        )
    order = rng.permutation(len(ids))
    test_ids = sorted(ids[int(i)] for i in order[:n_test])
    train_ids = [cid for cid in ids if cid not in set(test_ids)]
    return (
        bank.subset(train_ids, SplitTag.META_TRAIN),
        bank.subset(test_ids, SplitTag.META_TEST),
    )

from __future__ import annotations

from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from metameta.config import EpisodeConfig
from metameta.errors import SamplingError
from metameta.numerics.rng import Rng
from metameta.problems.models import ClassBank, Example, FiveWayProblem, Problem
from metameta.types import Label

FIVE_WAY = 5
FIVE_WAY_QUERIES = 15


def _draw_images(pool: np.ndarray, n: int, rng: Rng, exclude: Optional[int] = None) -> np.ndarray:
    """
    n row indices into a class matrix; without replacement when the class is
    large enough (after excluding the support image), with replacement otherwise.
    """
    candidates = np.arange(pool.shape[0])
    if exclude is not None and pool.shape[0] > 1:
        candidates = candidates[candidates != exclude]
    replace = candidates.size < n
    return rng.choice(candidates, size=n, replace=replace)


def _negatives(
    bank: ClassBank,
    classes: Sequence[int],
    n_images: int,
    rng: Rng,
) -> List[Example]:
    # class with replacement per slot, then one image uniformly
    picks = rng.choice(np.asarray(classes), size=n_images, replace=True)
    out: List[Example] = []
    for cid in picks:
        cid = int(cid)
        feats = bank.examples(cid)
        row = int(rng.integers(feats.shape[0]))
        out.append(Example(feats[row], Label.NEGATIVE, cid))
    return out


def sample_problem_routed(
    bank: ClassBank,
    cfg: EpisodeConfig,
    rng: Rng,
    positive_pool: Optional[Iterable[int]] = None,
) -> Problem:
    """
    One OvA episode with the positive class drawn from `positive_pool`
    (default: every class) and negatives from the whole bank.
    """
    all_ids = bank.class_ids
    if positive_pool is None:
        pool = all_ids
    else:
        pool = sorted(set(int(c) for c in positive_pool))
        if not pool:
            raise SamplingError("positive pool is empty")
        known = set(all_ids)
        missing = [c for c in pool if c not in known]
        if missing:
            raise SamplingError(f"positive pool has classes outside the bank: {missing[:5]!r}")

    if len(all_ids) - 1 < cfg.n_neg_classes:
        raise SamplingError(
            f"bank has {len(all_ids)} classes; need at least {cfg.n_neg_classes + 1} "
            f"(1 positive + {cfg.n_neg_classes} negative)"
        )

    positive = int(rng.choice(np.asarray(pool)))
    others = np.asarray([c for c in all_ids if c != positive])

    pos_feats = bank.examples(positive)
    support_row = int(rng.integers(pos_feats.shape[0]))
    train_set: List[Example] = [Example(pos_feats[support_row], Label.POSITIVE, positive)]

    neg_train_classes = rng.choice(others, size=cfg.n_neg_classes, replace=False)
    train_set.extend(_negatives(bank, neg_train_classes, cfg.n_neg_train, rng))

    neg_test_classes = rng.choice(others, size=cfg.n_neg_classes, replace=False)
    test_rows = _draw_images(pos_feats, cfg.n_pos_test, rng, exclude=support_row)
    test_set: List[Example] = [
        Example(pos_feats[int(r)], Label.POSITIVE, positive) for r in test_rows
    ]
    test_set.extend(_negatives(bank, neg_test_classes, cfg.n_neg_test, rng))

    return Problem(
        train_set=tuple(train_set),
        test_set=tuple(test_set),
        positive_class=positive,
        _mode_hint=bank.modes.get(positive),
    )


def sample_problem(bank: ClassBank, cfg: EpisodeConfig, rng: Rng) -> Problem:
    return sample_problem_routed(bank, cfg, rng, positive_pool=None)


def sample_fiveway(bank: ClassBank, rng: Rng) -> FiveWayProblem:
    """5 distinct classes, 1 support and 15 queries each (disjoint where possible)."""
    if bank.num_classes < FIVE_WAY:
        raise SamplingError(
            f"five-way sampling needs >= {FIVE_WAY} classes, bank has {bank.num_classes}"
        )

    classes: Tuple[int, ...] = tuple(
        int(c) for c in rng.choice(np.asarray(bank.class_ids), size=FIVE_WAY, replace=False)
    )
    supports = []
    q_feats = []
    q_labels = []
    for i, cid in enumerate(classes):
        feats = bank.examples(cid)
        support_row = int(rng.integers(feats.shape[0]))
        supports.append(feats[support_row])
        rows = _draw_images(feats, FIVE_WAY_QUERIES, rng, exclude=support_row)
        q_feats.append(feats[rows])
        q_labels.extend([i] * FIVE_WAY_QUERIES)

    return FiveWayProblem(
        classes=classes,
        supports=tuple(supports),
        query_features=np.concatenate(q_feats, axis=0),
        query_labels=np.asarray(q_labels, dtype=np.int64),
    )

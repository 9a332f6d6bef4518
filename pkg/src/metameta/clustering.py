from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from metameta.errors import ClusteringError, SamplingError, ShapeError
from metameta.logger import get_logger
from metameta.numerics.rng import Rng
from metameta.problems.models import ClassBank, Problem
from metameta.types import EmbeddingKind
from metameta.utils import modal_value, parallel_map

logger = get_logger(__name__)


@dataclass(frozen=True)
class EmbeddingSpec:
    kind: EmbeddingKind = EmbeddingKind.POSITIVE_ABS

    def to_dict(self) -> dict:
        return {"kind": self.kind.value}

    @classmethod
    def from_dict(cls, data: dict) -> EmbeddingSpec:
        return cls(kind=EmbeddingKind(data["kind"]))


@dataclass(frozen=True, eq=False)
class Centroids:
    mu: np.ndarray
    embedding: EmbeddingSpec
    inertia: float

    def __post_init__(self) -> None:
        if self.mu.ndim != 2 or self.mu.shape[0] < 1:
            raise ClusteringError(f"centroids must be a [k, dim] matrix, got {self.mu.shape}")
        if not np.all(np.isfinite(self.mu)):
            raise ClusteringError("centroids must be finite")
        if self.inertia < 0:
            raise ClusteringError("inertia must be >= 0")

    @property
    def k(self) -> int:
        return int(self.mu.shape[0])

    @property
    def dim(self) -> int:
        return int(self.mu.shape[1])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mu": [[float(v) for v in row] for row in self.mu],
            "embedding": self.embedding.to_dict(),
            "inertia": float(self.inertia),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Centroids:
        mu = np.asarray(data["mu"], dtype=np.float64)
        if mu.shape[0] != int(data["k"]):
            raise ClusteringError(f"centroid document lists {mu.shape[0]} rows for k={data['k']}")
        return cls(
            mu=mu,
            embedding=EmbeddingSpec.from_dict(data["embedding"]),
            inertia=float(data["inertia"]),
        )


@dataclass(frozen=True, eq=False)
class KMeansResult:
    centroids: Centroids
    assignments: np.ndarray
    restart: int
    iterations: int
    inertia_history: Tuple[float, ...] = field(default_factory=tuple)


def embed_features(features: np.ndarray, spec: EmbeddingSpec) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if spec.kind is EmbeddingKind.POSITIVE_ABS:
        return np.abs(features)
    return features.copy()


def embed_support(train_set, spec: EmbeddingSpec) -> np.ndarray:
    """
    h(D_trn): a transform of the single positive support example. Accepts a
    sequence of Examples or stacked (X, y) arrays.
    """
    stacked = isinstance(train_set, tuple) and len(train_set) == 2
    if stacked and isinstance(train_set[0], np.ndarray):
        x, y = train_set
        positives = list(np.asarray(x)[np.asarray(y) == 1])
    else:
        positives = [e.features for e in train_set if e.label.index == 1]
    if len(positives) != 1:
        raise ShapeError(f"embedding needs exactly one positive example, got {len(positives)}")
    return embed_features(positives[0], spec)


def embed_problem(problem: Problem, spec: EmbeddingSpec) -> np.ndarray:
    return embed_support(problem.train_set, spec)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp(points: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[int(rng.integers(n))]
    for i in range(1, k):
        d2 = np.min(_sq_dists(points, centers[:i]), axis=1)
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = points[idx]
    return centers


def _lloyd(
    points: np.ndarray, k: int, max_iters: int, rng: Rng
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    centers = _kmeans_pp(points, k, rng)
    d2 = _sq_dists(points, centers)
    labels = np.argmin(d2, axis=1)  # first minimum: ties -> lowest index
    history = [float(d2[np.arange(len(points)), labels].sum())]

    for _ in range(max_iters):
        new_centers = centers.copy()
        own = d2[np.arange(len(points)), labels]
        for j in range(k):
            members = labels == j
            if np.any(members):
                new_centers[j] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point worst served by its centroid
                far = int(np.argmax(own))
                new_centers[j] = points[far]
                own = own.copy()
                own[far] = 0.0
        centers = new_centers
        d2 = _sq_dists(points, centers)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(points)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels

    return centers, labels, history


def kmeans(
    points: Union[Sequence[np.ndarray], np.ndarray],
    k: int,
    max_iters: int = 100,
    restarts: int = 8,
    rng: Optional[Rng] = None,
    embedding: EmbeddingSpec = EmbeddingSpec(),
    threads: int = 1,
) -> KMeansResult:
    """
    Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by
    (inertia, restart index).
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"points must form a [n, dim] matrix, got shape {x.shape}")
    if k < 1:
        raise ClusteringError("k must be >= 1")
    if k > x.shape[0]:
        raise ClusteringError(f"k={k} exceeds the number of points ({x.shape[0]})")
    if restarts < 1 or max_iters < 1:
        raise ClusteringError("restarts and max_iters must be >= 1")
    rng = rng or Rng(0)

    def run(r: int):
        centers, labels, history = _lloyd(x, k, max_iters, rng.child(r))
        return r, centers, labels, history

    runs = parallel_map(run, range(restarts), threads)
    best = min(runs, key=lambda item: (item[3][-1], item[0]))
    r, centers, labels, history = best
    for item in runs:
        logger.debug("k-means restart %d inertia %.6f", item[0], item[3][-1])
    return KMeansResult(
        centroids=Centroids(mu=centers, embedding=embedding, inertia=max(history[-1], 0.0)),
        assignments=labels.astype(np.int64),
        restart=r,
        iterations=len(history) - 1,
        inertia_history=tuple(history),
    )


def assign(centroids: Centroids, point: np.ndarray) -> int:
    """Nearest centroid by Euclidean distance; ties -> lowest index."""
    point = np.asarray(point, dtype=np.float64)
    if point.shape != (centroids.dim,):
        raise ShapeError(f"point of shape {point.shape} vs centroid dim {centroids.dim}")
    d2 = np.sum((centroids.mu - point[None, :]) ** 2, axis=1)
    return int(np.argmin(d2))


def partition_classes(
    bank: ClassBank,
    centroids: Centroids,
    spec: EmbeddingSpec,
    samples_per_class: int,
    rng: Rng,
) -> Dict[int, int]:
    """
    Route every class to the modal cluster of `samples_per_class` single-positive
    problems drawn from it.
    """
    if samples_per_class < 1:
        raise ClusteringError("samples_per_class must be >= 1")
    if bank.num_classes == 0:
        raise SamplingError("cannot partition an empty bank")

    out: Dict[int, int] = {}
    for i, cid in enumerate(bank.class_ids):
        feats = bank.examples(cid)
        class_rng = rng.child(i)
        rows = class_rng.integers(feats.shape[0], size=samples_per_class)
        votes = [assign(centroids, embed_features(feats[int(r)], spec)) for r in rows]
        out[cid] = modal_value(votes, centroids.k)
    return out


def cluster_pools(partition: Dict[int, int], k: int) -> List[List[int]]:
    """Class ids per cluster; every cluster must own at least one class."""
    pools: List[List[int]] = [[] for _ in range(k)]
    for cid, j in sorted(partition.items()):
        pools[j].append(cid)
    for j, pool in enumerate(pools):
        if not pool:
            raise ClusteringError(f"cluster {j} received no classes")
    return pools

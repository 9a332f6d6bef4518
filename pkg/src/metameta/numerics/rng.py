from __future__ import annotations

import zlib
from typing import Optional, Sequence, Tuple, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


class Rng:
    """
    Deterministic generator built on numpy's Philox counter-based bit generator.

    Streams are derived by name (`spawn`) or by index (`child`) from the seed
    sequence, never from the parent's draw history, so consumers can be added
    without perturbing each other.
    """

    __slots__ = ("_seq", "_gen")

    def __init__(self, seed: SeedLike = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            if int(seed) < 0:
                raise ValueError("seed must be >= 0")
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.Philox(self._seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    @property
    def spawn_key(self) -> Tuple[int, ...]:
        return tuple(self._seq.spawn_key)

    def _derive(self, key: int) -> Rng:
        seq = np.random.SeedSequence(
            entropy=self._seq.entropy,
            spawn_key=tuple(self._seq.spawn_key) + (int(key),),
        )
        return Rng(seq)

    def spawn(self, name: str) -> Rng:
        """Named child stream; stable across runs and platforms."""
        return self._derive(zlib.crc32(name.encode("utf-8")))

    def child(self, index: int) -> Rng:
        if index < 0:
            raise ValueError("child index must be >= 0")
        return self._derive(index)

    # ---- draws ----

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def integers(self, high: int, size=None) -> np.ndarray:
        return self._gen.integers(0, high, size)

    def choice(
        self,
        items: Sequence,
        size: Optional[int] = None,
        replace: bool = True,
        p: Optional[np.ndarray] = None,
    ):
        return self._gen.choice(items, size=size, replace=replace, p=p)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(entropy={self._seq.entropy!r}, spawn_key={self.spawn_key!r})"

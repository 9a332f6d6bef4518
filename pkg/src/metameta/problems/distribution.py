from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from metameta.config import EpisodeConfig
from metameta.numerics.rng import Rng
from metameta.problems.models import ClassBank, Problem
from metameta.problems.sampler import sample_problem_routed


@dataclass(frozen=True)
class ProblemDistribution:
    """A class bank plus the episode protocol: the distribution problems are drawn from."""

    bank: ClassBank
    episode: EpisodeConfig

    @property
    def feature_dim(self) -> int:
        return self.bank.feature_dim

    def sample(self, rng: Rng, positive_pool: Optional[Iterable[int]] = None) -> Problem:
        return sample_problem_routed(self.bank, self.episode, rng, positive_pool)

    def stream(
        self,
        rng: Rng,
        positive_pool: Optional[Iterable[int]] = None,
        limit: Optional[int] = None,
    ) -> Iterator[Problem]:
        """
        Problems drawn from per-index child streams of `rng`, so problem i is the
        same whatever was consumed before it.
        """
        pool = None if positive_pool is None else sorted(set(positive_pool))
        i = 0
        while limit is None or i < limit:
            yield sample_problem_routed(self.bank, self.episode, rng.child(i), pool)
            i += 1

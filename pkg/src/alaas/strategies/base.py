"""Strategy input/output types and the extension base class."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from alaas.errors import BudgetExceedsPool, MissingInput, RowMisalignment
from alaas.models import DEFAULT_DBAL_BETA, EmbeddingMatrix, ProbabilityMatrix


@dataclass(frozen=True)
class Selection:
    ids: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.ids) != len(self.scores):
            raise ValueError("ids and scores must align")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("selected ids must be distinct")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class StrategyInput:
    """Model outputs for the candidate pool plus the query knobs.

    ``pool_ids`` names the candidates when no matrix is supplied (Random).
    Rows whose id is in ``labeled_ids`` are dropped before selection.
    """

    budget: int
    seed: int = 0
    probs: ProbabilityMatrix | None = None
    embeds: EmbeddingMatrix | None = None
    labeled_embeds: EmbeddingMatrix | None = None
    pool_ids: tuple[int, ...] | None = None
    labeled_ids: frozenset[int] = frozenset()
    beta: int = DEFAULT_DBAL_BETA

    def __post_init__(self):
        object.__setattr__(self, "labeled_ids", frozenset(int(i) for i in self.labeled_ids))
        if self.pool_ids is not None:
            object.__setattr__(self, "pool_ids", tuple(int(i) for i in self.pool_ids))
        if self.probs is not None and self.embeds is not None:
            if self.probs.row_ids != self.embeds.row_ids:
                raise RowMisalignment("probs and embeds row_ids differ")

    def candidate_ids(self) -> tuple[int, ...]:
        for source in (self.probs, self.embeds):
            if source is not None:
                return source.row_ids
        if self.pool_ids is not None:
            return self.pool_ids
        raise MissingInput("pool_ids")

    def without_labeled(self) -> StrategyInput:
        if not self.labeled_ids:
            return self
        ids = self.candidate_ids()
        keep = [i for i, sid in enumerate(ids) if sid not in self.labeled_ids]
        if len(keep) == len(ids):
            return StrategyInput(**{**self.__dict__, "labeled_ids": frozenset()})
        return StrategyInput(
            budget=self.budget,
            seed=self.seed,
            probs=self.probs.take(keep) if self.probs is not None else None,
            embeds=self.embeds.take(keep) if self.embeds is not None else None,
            labeled_embeds=self.labeled_embeds,
            pool_ids=tuple(ids[i] for i in keep) if self.pool_ids is not None else None,
            beta=self.beta,
        )


class Strategy(ABC):
    """Base class for selection strategies.

    Subclasses declare which inputs they need in ``requires`` and implement
    :meth:`select`.  Register them with :func:`alaas.strategies.register_strategy`
    to make them reachable through ``run_strategy`` by name.
    """

    name: ClassVar[str] = ""
    requires: ClassVar[tuple[str, ...]] = ()

    def __call__(self, inp: StrategyInput) -> Selection:
        for field_name in self.requires:
            if getattr(inp, field_name) is None:
                raise MissingInput(field_name)
        inp = inp.without_labeled()
        pool = len(inp.candidate_ids())
        if inp.budget < 1 or inp.budget > pool:
            raise BudgetExceedsPool(inp.budget, pool)
        return self.select(inp)

    @abstractmethod
    def select(self, inp: StrategyInput) -> Selection:
        """Pick ``inp.budget`` distinct ids from the candidate rows."""


def check_budget(budget: int, pool: int) -> None:
    if budget < 1 or budget > pool:
        raise BudgetExceedsPool(budget, pool)


def euclidean_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Distances from every row of ``points`` to one ``center``."""
    diff = points - center
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))

"""Uncertainty scores (higher = more informative), top-B and random picks."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from alaas.models import ProbabilityMatrix, check_simplex
from alaas.strategies.base import Selection, check_budget


def _as_probs(probs: ProbabilityMatrix | np.ndarray | Sequence) -> np.ndarray:
    if isinstance(probs, ProbabilityMatrix):
        return probs.data
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    check_simplex(arr)
    return arr


def _top_two(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    part = np.partition(p, p.shape[1] - 2, axis=1)
    return part[:, -1], part[:, -2]


def score_lc(probs) -> np.ndarray:
    """Least confidence: ``1 - max_c p(c|x)``."""
    p = _as_probs(probs)
    return 1.0 - p.max(axis=1)


def score_mc(probs) -> np.ndarray:
    """Margin confidence: ``1 - (p_top1 - p_top2)``."""
    top1, top2 = _top_two(_as_probs(probs))
    return 1.0 - (top1 - top2)


def score_rc(probs) -> np.ndarray:
    """Ratio confidence: ``p_top2 / p_top1``."""
    top1, top2 = _top_two(_as_probs(probs))
    return top2 / top1


def score_es(probs) -> np.ndarray:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    p = _as_probs(probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=1) + 0.0


def select_top_b(scores, row_ids: Sequence[int], budget: int) -> Selection:
    """The ``budget`` highest scores; ties go to the smaller id.

    Output is ordered by descending score, then ascending id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(row_ids, dtype=np.uint64)
    if scores.shape != ids.shape:
        raise ValueError("scores and row_ids must align")
    check_budget(budget, len(ids))
    order = np.lexsort((ids, -scores))[:budget]
    return Selection(tuple(ids[order].tolist()), tuple(scores[order].tolist()))


def philox(seed: int) -> np.random.Generator:
    """The project-wide PRNG: numpy's counter-based Philox4x64 keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def select_random(row_ids: Sequence[int], budget: int, seed: int) -> Selection:
    """Uniform sample without replacement.

    A partial Fisher-Yates shuffle over the ids in ascending order, driven
    by :func:`philox`, so the result depends only on the id set and seed.
    Scores are all zero.
    """
    pool = sorted(int(i) for i in row_ids)
    check_budget(budget, len(pool))
    rng = philox(seed)
    n = len(pool)
    for i in range(budget):
        j = int(rng.integers(i, n))
        pool[i], pool[j] = pool[j], pool[i]
    return Selection(tuple(pool[:budget]), (0.0,) * budget)

"""Embedding-space strategies: greedy k-center, k-means sampling, DBAL."""

from __future__ import annotations

import numpy as np

from alaas.errors import DimensionMismatch, RowMisalignment
from alaas.models import EmbeddingMatrix, ProbabilityMatrix
from alaas.strategies.base import Selection, check_budget, euclidean_to
from alaas.strategies.uncertainty import philox, score_lc, select_top_b

KMEANS_MAX_ITER = 100
KMEANS_REL_TOL = 1e-4
WEIGHT_FLOOR = 1e-12
_ASSIGN_BLOCK = 1 << 22


def select_kcenter_greedy(
    embeds: EmbeddingMatrix, labeled_embeds: EmbeddingMatrix | None, budget: int
) -> Selection:
    """Greedy k-center (the classic 2-approximation).

    Each step picks the unlabeled point farthest from its nearest center,
    where centers start as the labeled pool and grow with every pick.  With
    no labeled pool the first pick is the smallest id, scored ``inf``.
    Ties go to the smaller id.
    """
    embeds = embeds.sorted_by_id()
    X = embeds.data
    n = X.shape[0]
    check_budget(budget, n)
    min_dist = np.full(n, np.inf)
    if labeled_embeds is not None and labeled_embeds.rows:
        if labeled_embeds.dim != embeds.dim:
            raise DimensionMismatch(f"labeled dim {labeled_embeds.dim} != unlabeled dim {embeds.dim}")
        for center in labeled_embeds.data:
            np.minimum(min_dist, euclidean_to(X, center), out=min_dist)

    picked = np.zeros(n, dtype=bool)
    ids, scores = [], []
    for _ in range(budget):
        # argmax returns the first maximum, i.e. the smallest id
        idx = int(np.argmax(np.where(picked, -np.inf, min_dist)))
        ids.append(embeds.row_ids[idx])
        scores.append(float(min_dist[idx]))
        picked[idx] = True
        np.minimum(min_dist, euclidean_to(X, X[idx]), out=min_dist)
    return Selection(tuple(ids), tuple(scores))


def select_coreset(
    embeds: EmbeddingMatrix, labeled_embeds: EmbeddingMatrix | None, budget: int
) -> Selection:
    """Core-set selection; shares the greedy k-center kernel.

    The distinction is only the feature space: callers pass the model's
    penultimate-layer embeddings.
    """
    return select_kcenter_greedy(embeds, labeled_embeds, budget)


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], C.shape[0]))
    c_sq = np.einsum("ij,ij->i", C, C)
    step = max(1, _ASSIGN_BLOCK // max(1, C.shape[0]))
    for lo in range(0, X.shape[0], step):
        block = X[lo:lo + step]
        d = np.einsum("ij,ij->i", block, block)[:, None] - 2.0 * block @ C.T + c_sq[None, :]
        out[lo:lo + step] = np.maximum(d, 0.0)
    return out


def _draw(rng: np.random.Generator, mass: np.ndarray) -> int:
    cdf = np.cumsum(mass)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, len(mass) - 1)
    while mass[idx] <= 0.0:
        idx -= 1
    return idx


def kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator, weights: np.ndarray) -> np.ndarray:
    """Weighted k-means++ seeding; returns row positions of the k seeds."""
    n = X.shape[0]
    chosen = [_draw(rng, weights)]
    d2 = euclidean_to(X, X[chosen[0]]) ** 2
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    while len(chosen) < k:
        mass = np.where(taken, 0.0, weights * d2)
        if mass.sum() <= 0.0:
            # remaining points coincide with seeds: fall back to uniform over untaken rows
            mass = (~taken).astype(np.float64)
        idx = _draw(rng, mass)
        chosen.append(idx)
        taken[idx] = True
        np.minimum(d2, euclidean_to(X, X[idx]) ** 2, out=d2)
    return np.asarray(chosen)


def lloyd(
    X: np.ndarray,
    k: int,
    rng: np.random.Generator,
    weights: np.ndarray,
    max_iter: int = KMEANS_MAX_ITER,
    rel_tol: float = KMEANS_REL_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Lloyd iterations from a k-means++ start.

    Stops after ``max_iter`` rounds or once the weighted inertia improves by
    less than ``rel_tol`` relative to the previous round.  A centroid that
    loses all its members keeps its previous position.
    Returns ``(centroids, labels)``.
    """
    C = X[kmeanspp_init(X, k, rng, weights)].copy()
    prev = None
    labels = np.zeros(X.shape[0], dtype=np.intp)
    for _ in range(max_iter):
        d2 = _sq_dists(X, C)
        labels = np.argmin(d2, axis=1)
        inertia = float(np.sum(weights * d2[np.arange(X.shape[0]), labels]))
        if prev is not None and prev - inertia <= rel_tol * prev:
            break
        prev = inertia
        for j in range(k):
            members = labels == j
            w = weights[members]
            total = w.sum()
            if total > 0.0:
                C[j] = (w[:, None] * X[members]).sum(axis=0) / total
    return C, labels


def _nearest_per_centroid(
    X: np.ndarray, C: np.ndarray, labels: np.ndarray, weights: np.ndarray
) -> tuple[list[int], list[float]]:
    """One distinct row per centroid, in centroid order.

    The nearest row wins with ties to the smaller position; a centroid whose
    nearest row is already taken moves on to its next-nearest free row.  The
    score is the cluster's total weight.
    """
    taken = np.zeros(X.shape[0], dtype=bool)
    positions = np.arange(X.shape[0])
    picks, scores = [], []
    for j in range(C.shape[0]):
        dist = euclidean_to(X, C[j])
        for pos in np.lexsort((positions, dist)):
            if not taken[pos]:
                break
        taken[pos] = True
        picks.append(int(pos))
        scores.append(float(weights[labels == j].sum()))
    return picks, scores


def _kmeans_select(embeds: EmbeddingMatrix, budget: int, seed: int, weights: np.ndarray) -> Selection:
    check_budget(budget, embeds.rows)
    C, labels = lloyd(embeds.data, budget, philox(seed), weights)
    picks, scores = _nearest_per_centroid(embeds.data, C, labels, weights)
    return Selection(tuple(embeds.row_ids[p] for p in picks), tuple(scores))


def select_kmeans(embeds: EmbeddingMatrix, budget: int, seed: int) -> Selection:
    """Cluster the pool into ``budget`` groups and take the sample nearest each centroid."""
    embeds = embeds.sorted_by_id()
    return _kmeans_select(embeds, budget, seed, np.ones(embeds.rows))


def select_dbal(
    probs: ProbabilityMatrix, embeds: EmbeddingMatrix, budget: int, beta: int, seed: int
) -> Selection:
    """Diverse mini-batch selection.

    Keep the ``beta * budget`` least-confident rows, then run k-means with
    ``k = budget`` over their embeddings, weighting each row by its
    least-confidence score.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    probs, embeds = probs.sorted_by_id(), embeds.sorted_by_id()
    if probs.row_ids != embeds.row_ids:
        raise RowMisalignment("probs and embeds row_ids differ")
    check_budget(budget, embeds.rows)

    lc = score_lc(probs)
    keep = min(beta * budget, embeds.rows)
    prefilter = set(select_top_b(lc, probs.row_ids, keep).ids)
    positions = [i for i, sid in enumerate(embeds.row_ids) if sid in prefilter]
    weights = np.maximum(lc[positions], WEIGHT_FLOOR)
    # normalising by the max makes uniform weights exactly 1.0
    weights = weights / weights.max()
    return _kmeans_select(embeds.take(positions), budget, seed, weights)

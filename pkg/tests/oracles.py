"""Brute-force reference implementations used only by the tests.

Deliberately naive pure Python: full sorts, full pairwise distance tables,
explicit loops.  Nothing here imports from ``alaas.strategies``.
"""

from __future__ import annotations

import math


def lc(row):
    return 1.0 - max(row)


def mc(row):
    a, b = sorted(row, reverse=True)[:2]
    return 1.0 - (a - b)


def rc(row):
    a, b = sorted(row, reverse=True)[:2]
    return b / a


def es(row):
    return -sum(p * math.log(p) for p in row if p > 0)


SCORE = {"LC": lc, "MC": mc, "RC": rc, "ES": es}


def top_b(scores, ids, budget):
    ranked = sorted(zip(scores, ids), key=lambda t: (-t[0], t[1]))
    return [i for _, i in ranked[:budget]]


def kcenter_greedy(points, ids, labeled, budget):
    """O(n^2 * B) greedy k-center over a full distance table."""
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    points = [points[i] for i in order]
    ids = [ids[i] for i in order]
    n = len(points)
    table = [[math.dist(points[i], points[j]) for j in range(n)] for i in range(n)]
    to_labeled = [[math.dist(points[i], c) for c in labeled] for i in range(n)]
    centers: list[int] = []
    picks, scores = [], []
    for _ in range(budget):
        best, best_d = None, -1.0
        for i in range(n):
            if i in centers:
                continue
            ds = to_labeled[i] + [table[i][c] for c in centers]
            d = min(ds) if ds else math.inf
            if d > best_d:
                best, best_d = i, d
        centers.append(best)
        picks.append(ids[best])
        scores.append(best_d)
    return picks, scores

"""Cache placement: greedy maximisation of the offloading probability.

The greedy commits one ``(user, file)`` placement per step, choosing the
largest incremental gain.  Ties go to the lowest file index, then the
lowest user index.  It always runs ``K * M`` steps, so once every request
is covered the remaining slots are filled with zero-gain placements in
tie-break order.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from d2dcache.exceptions import BudgetExceededError, DomainError
from d2dcache.offload import CachingMatrix, CoverageTable
from d2dcache.topology import as_adjacency

__all__ = ["greedy_cache", "popularity_cache", "brute_force_cache", "BRUTE_FORCE_BUDGET"]

BRUTE_FORCE_BUDGET = 10**6


def _check_instance(Q, w, A, M):
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(w, dtype=float)
    if Q.ndim != 2 or w.shape != (Q.shape[0],) or A.shape != (Q.shape[0],) * 2:
        raise DomainError(f"shape mismatch: Q{Q.shape}, w{w.shape}, A{A.shape}")
    if M < 0 or M > Q.shape[1]:
        raise DomainError(f"cache size M must lie in [0, F={Q.shape[1]}], got {M}")
    return Q, w


def greedy_cache(Q, w, topology, M: int) -> CachingMatrix:
    """Greedy placement maximising the offloading probability.

    Parameters
    ----------
    Q : array-like, shape (K, F)
        User preferences (true or predicted).
    w : array-like, shape (K,)
        User activity.
    topology : Topology or array-like, shape (K, K)
        D2D adjacency with unit diagonal.
    M : int
        Files per user cache.

    Returns
    -------
    CachingMatrix
        Exactly ``M`` files at every user.
    """
    A = as_adjacency(topology)
    Q, w = _check_instance(Q, w, A, M)
    K, F = Q.shape
    cache = CachingMatrix.empty(K, F, M)
    if M == 0:
        return cache

    coverage = CoverageTable(A, cache.C)
    # uncovered[k, f]: request mass of (k, f) not yet reachable.
    uncovered = w[:, None] * Q
    # gain(m, f) = sum_k a_{k,m} uncovered[k, f]; stored file-major so that
    # argmax over the flattened table yields the lowest file, then user.
    At = np.ascontiguousarray(A.T, dtype=float)
    gains = np.empty((F, K))
    for f in range(F):
        gains[f] = At @ uncovered[:, f]
    load = np.zeros(K, dtype=int)

    for _ in range(K * M):
        idx = int(np.argmax(gains))
        f, m = divmod(idx, K)
        if gains[f, m] == -np.inf:
            break
        cache.C[m, f] = 1
        load[m] += 1
        newly = coverage.add(m, f)
        if newly.size:
            uncovered[newly, f] = 0.0
            gains[f] = At @ uncovered[:, f]
            gains[f, cache.C[:, f] == 1] = -np.inf
            gains[f, load >= M] = -np.inf
        gains[f, m] = -np.inf
        if load[m] >= M:
            gains[:, m] = -np.inf
    return cache


def popularity_cache(p, topology, M: int, K: int | None = None) -> CachingMatrix:
    """Greedy placement assuming every user requests with popularity ``p``
    and all users are equally active."""
    A = as_adjacency(topology)
    if K is None:
        K = A.shape[0]
    p = np.asarray(p, dtype=float)
    Q = np.tile(p, (K, 1))
    w = np.full(K, 1.0 / K)
    return greedy_cache(Q, w, A, M)


def brute_force_cache(Q, w, topology, M: int, budget: int = BRUTE_FORCE_BUDGET,
                      chunk: int = 65536) -> CachingMatrix:
    """Exhaustive optimum of the offloading probability.

    The objective is monotone, so only placements filling every cache are
    enumerated.  Among equal objectives the first placement in
    lexicographic order (user 0's file set most significant) wins.
    """
    A = as_adjacency(topology)
    Q, w = _check_instance(Q, w, A, M)
    K, F = Q.shape
    if M == 0:
        return CachingMatrix.empty(K, F, 0)

    subsets = np.zeros((math.comb(F, M), F), dtype=np.int8)
    for i, files in enumerate(itertools.combinations(range(F), M)):
        subsets[i, list(files)] = 1
    n_sub = subsets.shape[0]
    total = n_sub**K
    if total > budget:
        raise BudgetExceededError(
            f"{total} placements exceed the enumeration budget of {budget}"
        )

    weight = w[:, None] * Q
    Af = A.astype(float)
    best_value, best_flat = -np.inf, 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        choice = np.stack(np.unravel_index(flat, (n_sub,) * K), axis=1)
        C = subsets[choice].astype(float)  # (batch, K, F)
        reach = np.einsum("km,bmf->bkf", Af, C) > 0
        values = (reach * weight).sum(axis=(1, 2))
        i = int(np.argmax(values))
        if values[i] > best_value:
            best_value, best_flat = values[i], int(flat[i])

    choice = np.unravel_index(best_flat, (n_sub,) * K)
    return CachingMatrix(subsets[list(choice)], M)

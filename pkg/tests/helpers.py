"""Random small instances shared by the test modules."""
import numpy as np


def random_adjacency(rng, K, density=0.5):
    upper = np.triu(rng.random((K, K)) < density, k=1)
    A = (upper | upper.T).astype(np.int8)
    np.fill_diagonal(A, 1)
    return A


def random_instance(rng, K, F, density=0.5):
    Q = rng.dirichlet(np.ones(F), size=K)
    w = rng.dirichlet(np.ones(K))
    return Q, w, random_adjacency(rng, K, density)


def random_cache(rng, K, F, M):
    C = np.zeros((K, F), dtype=np.int8)
    for k in range(K):
        n = rng.integers(0, M + 1)
        C[k, rng.choice(F, size=n, replace=False)] = 1
    return C


def offloading_by_enumeration(Q, w, A, C):
    """Offloading probability by explicit loops over users, files and helpers."""
    K, F = Q.shape
    total = 0.0
    for k in range(K):
        for f in range(F):
            if any(A[k][m] and C[m][f] for m in range(K)):
                total += w[k] * Q[k][f]
    return total

"""Offloading probability of a cache placement and its marginal gains."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from d2dcache.exceptions import DomainError
from d2dcache.topology import as_adjacency

__all__ = [
    "CachingMatrix",
    "CoverageTable",
    "as_cache_array",
    "reachable_files",
    "offloading_probability",
    "popularity_offloading_probability",
    "incremental_gain",
]


@dataclass
class CachingMatrix:
    """Binary placement ``C[k, f]`` of files on user caches of size ``M``."""

    C: np.ndarray
    M: int

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=np.int8)
        if self.C.ndim != 2:
            raise DomainError(f"caching matrix must be 2-D, got shape {self.C.shape}")
        if not np.isin(self.C, (0, 1)).all():
            raise DomainError("caching matrix entries must be 0 or 1")
        if self.M < 0 or np.any(self.C.sum(axis=1) > self.M):
            raise DomainError(f"a user caches more than M={self.M} files")

    @classmethod
    def empty(cls, K: int, F: int, M: int) -> "CachingMatrix":
        return cls(np.zeros((K, F), dtype=np.int8), M)

    @property
    def K(self) -> int:
        return self.C.shape[0]

    @property
    def F(self) -> int:
        return self.C.shape[1]

    def placements(self) -> list[tuple[int, int]]:
        """``(user, file)`` pairs in lexicographic order."""
        return [(int(k), int(f)) for k, f in np.argwhere(self.C)]

    def to_dict(self) -> dict:
        return {"K": self.K, "F": self.F, "M": self.M,
                "placements": [list(pair) for pair in self.placements()]}

    @classmethod
    def from_dict(cls, doc: dict) -> "CachingMatrix":
        C = np.zeros((doc["K"], doc["F"]), dtype=np.int8)
        for k, f in doc["placements"]:
            C[k, f] = 1
        return cls(C, int(doc["M"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CachingMatrix":
        return cls.from_dict(json.loads(text))


def as_cache_array(C) -> np.ndarray:
    if isinstance(C, CachingMatrix):
        return C.C
    return np.asarray(C)


class CoverageTable:
    """Per-(user, file) count of neighbours caching the file.

    ``D[k, f] = sum_m A[k, m] C[m, f]``; file ``f`` is reachable by ``k``
    iff ``D[k, f] > 0``.  Counts are integers so additions (and any later
    removals) stay exact.
    """

    def __init__(self, topology, C):
        self.A = as_adjacency(topology)
        C = as_cache_array(C)
        self.D = self.A.astype(np.int64) @ C.astype(np.int64)

    def add(self, m: int, f: int) -> np.ndarray:
        """Record that user ``m`` now caches file ``f``.

        Returns the users that could not reach ``f`` before.
        """
        nbrs = np.flatnonzero(self.A[:, m])
        newly = nbrs[self.D[nbrs, f] == 0]
        self.D[nbrs, f] += 1
        return newly

    def reachable(self) -> np.ndarray:
        return self.D > 0


def reachable_files(topology, C, k: int) -> set[int]:
    """Files user ``k`` can fetch from its own or a neighbour's cache."""
    A = as_adjacency(topology)
    C = as_cache_array(C)
    counts = A[k].astype(np.int64) @ C.astype(np.int64)
    return set(np.flatnonzero(counts > 0).tolist())


def offloading_probability(Q, w, topology, C) -> float:
    """Probability that a request is served over D2D (or locally).

    ``sum_k w_k sum_f q_{k,f} [f reachable by k]``.
    """
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(w, dtype=float)
    reach = CoverageTable(topology, C).reachable()
    if reach.shape != Q.shape:
        raise DomainError(f"shape mismatch: Q{Q.shape} vs placement {reach.shape}")
    return float(np.sum(w[:, None] * Q * reach))


def popularity_offloading_probability(p, topology, C) -> float:
    """Offloading probability when every user requests with popularity ``p``
    and all users are equally active."""
    p = np.asarray(p, dtype=float)
    reach = CoverageTable(topology, C).reachable()
    if reach.shape[1] != p.shape[0]:
        raise DomainError(f"shape mismatch: p{p.shape} vs placement {reach.shape}")
    return float(p @ reach.sum(axis=0) / reach.shape[0])


def incremental_gain(Q, w, topology, C, coverage: CoverageTable | None, m: int, f: int) -> float:
    """Increase in offloading probability from caching file ``f`` at user ``m``.

    Only ``m``'s neighbours that cannot yet reach ``f`` contribute.
    """
    C = as_cache_array(C)
    if C[m, f]:
        raise ValueError(f"file {f} is already cached at user {m}")
    if coverage is None:
        coverage = CoverageTable(topology, C)
    nbrs = np.flatnonzero(coverage.A[:, m])
    fresh = nbrs[coverage.D[nbrs, f] == 0]
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(w, dtype=float)
    return float(np.sum(w[fresh] * Q[fresh, f]))

"""User placement in a square cell and the D2D adjacency it induces."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from d2dcache.exceptions import DomainError

__all__ = ["FULL", "Topology", "place_users", "adjacency", "as_adjacency"]

#: Collaboration radius meaning "every pair of users is linked".
FULL = "full"


@dataclass(frozen=True)
class Topology:
    """Users in a cell and their D2D links.

    ``A[i, j] == 1`` iff users ``i`` and ``j`` are strictly closer than
    ``rc``.  The diagonal is always 1: a user's own cache counts as a D2D
    source.
    """

    positions: np.ndarray
    side: float
    rc: float | str
    A: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.A.shape[0]

    def neighbors(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.A[k])

    def to_dict(self) -> dict:
        # A is derived data and is rebuilt on load.
        return {"side": self.side, "rc": self.rc, "positions": self.positions.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Topology":
        positions = np.asarray(doc["positions"], dtype=float).reshape(-1, 2)
        return adjacency(positions, doc["rc"], side=float(doc["side"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))


def place_users(K: int, side: float, seed=None) -> np.ndarray:
    """Drop ``K`` users uniformly at random in ``[0, side]^2``."""
    if K < 1:
        raise DomainError(f"number of users K must be >= 1, got {K}")
    if side <= 0:
        raise DomainError(f"cell side must be positive, got {side}")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, side, size=(K, 2))


def adjacency(positions, rc: float | str, side: float | None = None) -> Topology:
    """Link every pair of users strictly closer than ``rc`` metres.

    ``rc=FULL`` links everyone without going through an infinite radius.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    K = positions.shape[0]
    if side is None:
        side = float(positions.max()) if K else 0.0
    if rc == FULL:
        A = np.ones((K, K), dtype=np.int8)
    else:
        rc = float(rc)
        if rc <= 0:
            raise DomainError(f"collaboration distance must be positive, got {rc}")
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        A = (dist < rc).astype(np.int8)
        np.fill_diagonal(A, 1)
    return Topology(positions=positions, side=float(side), rc=rc, A=A)


def as_adjacency(topology) -> np.ndarray:
    """Accept a :class:`Topology` or a raw 0/1 matrix and return the matrix."""
    if isinstance(topology, Topology):
        return topology.A
    A = np.asarray(topology)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"adjacency must be square, got shape {A.shape}")
    return A

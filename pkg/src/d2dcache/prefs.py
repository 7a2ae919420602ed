"""Content popularity and heterogeneous user preference models.

Files and users are stored 0-based; the Zipf rank of file index ``i`` is
``i + 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from d2dcache.exceptions import ConstructionError, DomainError

__all__ = [
    "PreferenceModel",
    "zipf_popularity",
    "kernel_exponent",
    "synth_preferences",
    "preferences_from_features",
    "cosine_similarity",
    "average_similarity",
    "aggregate_popularity",
]


def zipf_popularity(F: int, beta: float) -> np.ndarray:
    """Zipf popularity over ``F`` files, most popular first.

    Parameters
    ----------
    F : int
        Library size.
    beta : float
        Skewness exponent; ``0`` gives the uniform distribution.

    Returns
    -------
    p : ndarray, shape (F,)
        ``p[i] = (i+1)**-beta / sum_j j**-beta``.
    """
    if F < 1:
        raise DomainError(f"library size F must be >= 1, got {F}")
    if beta < 0:
        raise DomainError(f"Zipf exponent beta must be >= 0, got {beta}")
    weights = np.arange(1, F + 1, dtype=float) ** (-float(beta))
    return weights / weights.sum()


def kernel_exponent(alpha: float) -> float:
    """Exponent ``1/alpha**3 - 1`` of the user-file similarity kernel."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    return 1.0 / alpha**3 - 1.0


@dataclass(frozen=True)
class PreferenceModel:
    """Ground-truth request statistics of a cell.

    Attributes
    ----------
    Q : ndarray, shape (K, F)
        Row-stochastic user preferences ``q[k, f] = P(f | u_k)``.
    w : ndarray, shape (K,)
        User activity ``w[k] = P(u_k)``.
    p : ndarray, shape (F,)
        Content popularity implied by ``w @ Q``.
    X, Y : ndarray or None
        User and file features the model was synthesised from.
    """

    Q: np.ndarray
    w: np.ndarray
    p: np.ndarray
    alpha: float | None = None
    beta: float | None = None
    X: np.ndarray | None = None
    Y: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.Q.shape[0]

    @property
    def F(self) -> int:
        return self.Q.shape[1]

    def joint(self) -> np.ndarray:
        """Joint request distribution ``P(u_k, f) = w_k q_{k,f}``."""
        return self.w[:, None] * self.Q

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "F": self.F,
            "alpha": self.alpha,
            "beta": self.beta,
            "w": self.w.tolist(),
            "Q": self.Q.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PreferenceModel":
        Q = np.asarray(doc["Q"], dtype=float)
        w = np.asarray(doc["w"], dtype=float)
        if Q.shape != (doc["K"], doc["F"]) or w.shape != (doc["K"],):
            raise DomainError(
                f"model shapes Q{Q.shape}, w{w.shape} disagree with K={doc['K']}, F={doc['F']}"
            )
        alpha, beta = doc.get("alpha"), doc.get("beta")
        return cls(Q=Q, w=w, p=aggregate_popularity(Q, w),
                   alpha=None if alpha is None else float(alpha),
                   beta=None if beta is None else float(beta))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PreferenceModel":
        return cls.from_dict(json.loads(text))


def preferences_from_features(X, Y, beta: float, alpha: float) -> PreferenceModel:
    """Build the kernel preference model from explicit user/file features.

    Each file's Zipf mass ``p_f`` is split among users in proportion to
    ``g(X_k, Y_f) = (1 - |X_k - Y_f|) ** (1/alpha**3 - 1)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 1 or Y.ndim != 1 or X.size < 1 or Y.size < 1:
        raise DomainError("features X and Y must be non-empty vectors")
    exponent = kernel_exponent(alpha)
    p = zipf_popularity(Y.size, beta)

    if exponent == 0.0:
        # g == 1: every user requests with the popularity itself, equally often.
        K = X.size
        return PreferenceModel(Q=np.tile(p, (K, 1)), w=np.full(K, 1.0 / K), p=p,
                               alpha=float(alpha), beta=float(beta), X=X, Y=Y)

    # Normalise each file's column in log space: for small alpha the raw
    # kernel underflows long before the per-file shares do.
    with np.errstate(divide="ignore"):
        log_g = exponent * np.log1p(-np.abs(X[:, None] - Y[None, :]))
    col_max = log_g.max(axis=0)
    if not np.all(np.isfinite(col_max)):
        raise ConstructionError("a file has zero kernel mass at every user")
    g = np.exp(log_g - col_max)
    share = g / g.sum(axis=0)

    joint = share * p
    w = joint.sum(axis=1)
    if np.any(w <= 0.0):
        bad = np.flatnonzero(w <= 0.0).tolist()
        raise ConstructionError(f"users {bad} receive zero request probability")
    Q = joint / w[:, None]
    return PreferenceModel(Q=Q, w=w, p=p, alpha=float(alpha), beta=float(beta), X=X, Y=Y)


def synth_preferences(F: int, K: int, beta: float, alpha: float, seed=None) -> PreferenceModel:
    """Draw a synthetic preference model.

    User features are drawn first (in user order), then file features (in
    file order), all uniform on ``[0, 1]`` from ``np.random.default_rng(seed)``.
    """
    if K < 1:
        raise DomainError(f"number of users K must be >= 1, got {K}")
    if F < 1:
        raise DomainError(f"library size F must be >= 1, got {F}")
    kernel_exponent(alpha)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=K)
    Y = rng.uniform(0.0, 1.0, size=F)
    return preferences_from_features(X, Y, beta, alpha)


def cosine_similarity(q_a, q_b) -> float:
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    norm_a = np.linalg.norm(q_a)
    norm_b = np.linalg.norm(q_b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    return float(q_a @ q_b / (norm_a * norm_b))


def average_similarity(Q) -> float:
    """Mean cosine similarity over all unordered pairs of rows of ``Q``."""
    Q = np.asarray(Q, dtype=float)
    K = Q.shape[0]
    if K < 2:
        raise DomainError(f"average similarity needs at least 2 users, got {K}")
    norms = np.linalg.norm(Q, axis=1)
    if np.any(norms == 0.0):
        raise DomainError("cosine similarity is undefined for a zero vector")
    unit = Q / norms[:, None]
    gram = unit @ unit.T
    upper = np.triu_indices(K, k=1)
    return float(gram[upper].mean())


def aggregate_popularity(Q, w) -> np.ndarray:
    """Content popularity ``p_f = sum_k w_k q_{k,f}``."""
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(w, dtype=float)
    if Q.ndim != 2 or w.shape != (Q.shape[0],):
        raise DomainError(f"shape mismatch: Q{Q.shape} vs w{w.shape}")
    return w @ Q

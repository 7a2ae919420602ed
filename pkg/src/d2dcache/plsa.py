"""Learning user preferences from request counts.

The request log ``N[k, f]`` is modelled as draws from a latent-topic
mixture ``P(u_k, f) = sum_j P(z_j) P(u_k | z_j) P(f | z_j)`` fitted by EM.
A frequency-count estimator is provided as the baseline.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from d2dcache.exceptions import DomainError

__all__ = [
    "PlsaParams",
    "PredictedStats",
    "FLOOR",
    "read_requests_csv",
    "write_requests_csv",
    "random_params",
    "joint",
    "log_likelihood",
    "e_step",
    "m_step",
    "em_iteration",
    "fit",
    "predict",
    "frequency_baseline",
]

logger = logging.getLogger(__name__)

#: Floor applied to probabilities entering a log or a denominator.
FLOOR = 1e-300


@dataclass
class PlsaParams:
    """Topic mixture parameters.

    Attributes
    ----------
    Pz : ndarray, shape (Z,)
        Topic prior.
    Puz : ndarray, shape (K, Z)
        Column ``j`` is ``P(u | z_j)``.
    Pfz : ndarray, shape (F, Z)
        Column ``j`` is ``P(f | z_j)``.
    loglik_trace : list of float
        Log-likelihood after each EM iteration.
    """

    Pz: np.ndarray
    Puz: np.ndarray
    Pfz: np.ndarray
    loglik_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def Z(self) -> int:
        return self.Pz.shape[0]

    @property
    def n_iter(self) -> int:
        return len(self.loglik_trace)

    def to_dict(self) -> dict:
        return {
            "Z": self.Z,
            "Pz": self.Pz.tolist(),
            "Puz": self.Puz.tolist(),
            "Pfz": self.Pfz.tolist(),
            "loglik_trace": list(self.loglik_trace),
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PlsaParams":
        return cls(
            Pz=np.asarray(doc["Pz"], dtype=float),
            Puz=np.asarray(doc["Puz"], dtype=float).reshape(-1, doc["Z"]),
            Pfz=np.asarray(doc["Pfz"], dtype=float).reshape(-1, doc["Z"]),
            loglik_trace=[float(x) for x in doc.get("loglik_trace", [])],
            converged=bool(doc.get("converged", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PlsaParams":
        return cls.from_dict(json.loads(text))


@dataclass
class PredictedStats:
    """Estimated activity ``w_hat``, preferences ``Q_hat`` and popularity ``p_hat``."""

    w_hat: np.ndarray
    Q_hat: np.ndarray
    p_hat: np.ndarray

    def to_dict(self) -> dict:
        return {"w_hat": self.w_hat.tolist(), "Q_hat": self.Q_hat.tolist(),
                "p_hat": self.p_hat.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _as_counts(N) -> np.ndarray:
    N = np.asarray(N)
    if N.ndim != 2:
        raise DomainError(f"request matrix must be 2-D, got shape {N.shape}")
    if np.any(N < 0):
        raise DomainError("request counts must be non-negative")
    if N.sum() <= 0:
        raise DomainError("request matrix holds no requests")
    return N


def read_requests_csv(source, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Parse a ``user,file,count`` CSV (0-based indices) into a count matrix.

    Without ``shape`` the matrix is sized by the largest indices seen.
    Repeated ``(user, file)`` rows are summed.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.DictReader(source)
    if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["user", "file", "count"]:
        raise DomainError("request CSV must have header 'user,file,count'")
    rows = [(int(r["user"]), int(r["file"]), int(r["count"])) for r in reader]
    if not rows:
        raise DomainError("request CSV has no rows")
    if shape is None:
        shape = (max(r[0] for r in rows) + 1, max(r[1] for r in rows) + 1)
    N = np.zeros(shape, dtype=np.int64)
    for k, f, n in rows:
        if n < 0:
            raise DomainError(f"negative count at user {k}, file {f}")
        N[k, f] += n
    return N


def write_requests_csv(N, sink) -> None:
    """Write the non-zero cells of ``N`` as ``user,file,count`` rows."""
    sink.write("user,file,count\n")
    for k, f in np.argwhere(np.asarray(N) > 0):
        sink.write(f"{k},{f},{int(N[k, f])}\n")


def random_params(K: int, F: int, Z: int, seed=None) -> PlsaParams:
    """Dirichlet(1) initialisation, drawn as Pz, then Puz columns, then Pfz columns."""
    rng = np.random.default_rng(seed)
    Pz = rng.dirichlet(np.ones(Z))
    Puz = np.column_stack([rng.dirichlet(np.ones(K)) for _ in range(Z)])
    Pfz = np.column_stack([rng.dirichlet(np.ones(F)) for _ in range(Z)])
    return PlsaParams(Pz=Pz, Puz=Puz, Pfz=Pfz)


def joint(params: PlsaParams) -> np.ndarray:
    """Model joint ``P(u_k, f)`` as a ``(K, F)`` matrix."""
    return (params.Puz * params.Pz) @ params.Pfz.T


def log_likelihood(N, params: PlsaParams) -> float:
    N = np.asarray(N)
    k, f = np.nonzero(N)
    mass = np.einsum("j,ij,ij->i", params.Pz, params.Puz[k], params.Pfz[f])
    return float(np.sum(N[k, f] * np.log(np.maximum(mass, FLOOR))))


def e_step(params: PlsaParams) -> np.ndarray:
    """Topic posteriors ``P(z_j | u_k, f)`` as a ``(Z, K, F)`` tensor."""
    num = params.Pz[:, None, None] * params.Puz.T[:, :, None] * params.Pfz.T[:, None, :]
    denom = num.sum(axis=0)
    dead = denom < FLOOR
    if dead.any():
        logger.warning("%d cells have zero model mass; using uniform posteriors", int(dead.sum()))
    post = num / np.maximum(denom, FLOOR)
    post[:, dead] = 1.0 / params.Z
    return post


def _normalize_columns(resp: np.ndarray, size: int) -> np.ndarray:
    """Normalise responsibility columns; dead topics become uniform."""
    totals = resp.sum(axis=0)
    dead = totals <= 0.0
    if dead.any():
        logger.warning("topics %s carry no responsibility; resetting to uniform",
                       np.flatnonzero(dead).tolist())
    out = resp / np.where(dead, 1.0, totals)
    out[:, dead] = 1.0 / size
    return out


def m_step(N, posterior: np.ndarray) -> PlsaParams:
    """Re-estimate parameters from counts and ``(Z, K, F)`` posteriors."""
    N = _as_counts(N)
    weighted = posterior * N[None, :, :]
    per_topic = weighted.sum(axis=(1, 2))
    Pz = per_topic / N.sum()
    Puz = _normalize_columns(weighted.sum(axis=2).T, N.shape[0])
    Pfz = _normalize_columns(weighted.sum(axis=1).T, N.shape[1])
    return PlsaParams(Pz=Pz, Puz=Puz, Pfz=Pfz)


class _Cells:
    """Non-zero cells of a request matrix, pre-grouped by user and by file."""

    def __init__(self, users, files, counts, K, F):
        order = np.lexsort((files, users))
        self.users = np.asarray(users)[order]
        self.files = np.asarray(files)[order]
        self.counts = np.asarray(counts, dtype=float)[order]
        self.total = float(self.counts.sum())
        self.K, self.F = K, F
        self.user_ids, self.user_starts = np.unique(self.users, return_index=True)
        self.by_file = np.argsort(self.files, kind="stable")
        self.file_ids, self.file_starts = np.unique(self.files[self.by_file], return_index=True)

    @classmethod
    def from_counts(cls, N) -> "_Cells":
        users, files = np.nonzero(N)
        return cls(users, files, N[users, files], *N.shape)


def _cell_posteriors(params: PlsaParams, cells: _Cells):
    """Posteriors over topics for each cell, plus each cell's model mass."""
    num = params.Pz * params.Puz[cells.users] * params.Pfz[cells.files]  # (nnz, Z)
    mass = num.sum(axis=1)
    dead = mass < FLOOR
    post = num / np.maximum(mass, FLOOR)[:, None]
    if dead.any():
        logger.warning("%d cells have zero model mass; using uniform posteriors", int(dead.sum()))
        post[dead] = 1.0 / params.Z
    return post, mass


def _update(post, cells: _Cells) -> PlsaParams:
    Z = post.shape[1]
    weighted = post * cells.counts[:, None]
    Pz = weighted.sum(axis=0) / cells.total
    user_resp = np.zeros((cells.K, Z))
    user_resp[cells.user_ids] = np.add.reduceat(weighted, cells.user_starts, axis=0)
    file_resp = np.zeros((cells.F, Z))
    file_resp[cells.file_ids] = np.add.reduceat(weighted[cells.by_file], cells.file_starts, axis=0)
    return PlsaParams(Pz=Pz, Puz=_normalize_columns(user_resp, cells.K),
                      Pfz=_normalize_columns(file_resp, cells.F))


def em_iteration(params: PlsaParams, users, files, counts) -> PlsaParams:
    """One fused E+M step over the non-zero cells ``(users, files, counts)``.

    Equivalent to ``m_step(N, e_step(params))`` without the dense tensor.
    """
    cells = _Cells(users, files, counts, params.Puz.shape[0], params.Pfz.shape[0])
    post, _ = _cell_posteriors(params, cells)
    return _update(post, cells)


def _fit_once(cells: _Cells, Z, epsilon, max_iter, rng) -> PlsaParams:
    params = random_params(cells.K, cells.F, Z, rng)
    post, _ = _cell_posteriors(params, cells)
    trace = []
    previous = 0.0
    converged = False
    for _ in range(max_iter):
        params = _update(post, cells)
        # The next E-step's normaliser is the new model mass of each cell.
        post, mass = _cell_posteriors(params, cells)
        ll = float(cells.counts @ np.log(np.maximum(mass, FLOOR)))
        trace.append(ll)
        if abs(ll - previous) / cells.total <= epsilon:
            converged = True
            break
        previous = ll
    params.loglik_trace = trace
    params.converged = converged
    return params


def fit(N, Z: int, epsilon: float = 1e-6, max_iter: int = 500, seed=None,
        restarts: int = 1) -> PlsaParams:
    """Fit the topic mixture to request counts ``N`` by EM.

    Iterates until the change in log-likelihood per request drops to
    ``epsilon`` or ``max_iter`` iterations have run.  The first change is
    measured against 0.  With ``restarts > 1`` independent initialisations
    are drawn from spawned child seeds and the fit with the highest final
    log-likelihood is returned.
    """
    N = _as_counts(N)
    if Z < 1:
        raise DomainError(f"number of topics Z must be >= 1, got {Z}")
    if epsilon <= 0:
        raise DomainError(f"stop threshold epsilon must be positive, got {epsilon}")
    if max_iter < 1 or restarts < 1:
        raise DomainError("max_iter and restarts must be >= 1")

    cells = _Cells.from_counts(N)

    if restarts == 1:
        rngs = [np.random.default_rng(seed)]
    else:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rngs = [np.random.default_rng(child) for child in seq.spawn(restarts)]

    best = None
    for rng in rngs:
        params = _fit_once(cells, Z, epsilon, max_iter, rng)
        if best is None or params.loglik_trace[-1] > best.loglik_trace[-1]:
            best = params
    return best


def predict(params: PlsaParams) -> PredictedStats:
    """Activity, preferences and popularity implied by the fitted joint."""
    J = joint(params)
    w_hat = J.sum(axis=1)
    p_hat = J.sum(axis=0)
    Q_hat = np.empty_like(J)
    active = w_hat > 0
    Q_hat[active] = J[active] / w_hat[active, None]
    if not active.all():
        logger.warning("users %s have zero predicted activity; using popularity",
                       np.flatnonzero(~active).tolist())
        Q_hat[~active] = p_hat
    return PredictedStats(w_hat=w_hat, Q_hat=Q_hat, p_hat=p_hat)


def frequency_baseline(N) -> PredictedStats:
    """Frequency-count estimates: row-normalised counts as preferences."""
    N = _as_counts(N).astype(float)
    total = N.sum()
    row_totals = N.sum(axis=1)
    w_hat = row_totals / total
    p_hat = N.sum(axis=0) / total
    Q_hat = np.empty_like(N)
    active = row_totals > 0
    Q_hat[active] = N[active] / row_totals[active, None]
    if not active.all():
        logger.info("users %s made no requests; using popularity",
                    np.flatnonzero(~active).tolist())
        Q_hat[~active] = p_hat
    return PredictedStats(w_hat=w_hat, Q_hat=Q_hat, p_hat=p_hat)

"""Multi-period learning/placement/delivery simulation.

Each period the cell sees a batch of requests drawn from the true
preferences, every learning scheme re-estimates statistics from the
cumulative request log and re-optimises its placement, and every placement
is scored against the *true* preferences, activity and topology.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import platform
from dataclasses import dataclass, field

import numpy as np

from d2dcache.exceptions import DomainError
from d2dcache.offload import offloading_probability
from d2dcache.optimizer import greedy_cache, popularity_cache
from d2dcache.plsa import fit, frequency_baseline, predict
from d2dcache.prefs import PreferenceModel, kernel_exponent, synth_preferences
from d2dcache.topology import FULL, Topology, adjacency, place_users

__all__ = [
    "SCHEMES",
    "ConfigError",
    "SimConfig",
    "TimeSeries",
    "build_world",
    "requests_per_period",
    "generate_requests",
    "run_schedule",
    "run_manifest",
]

logger = logging.getLogger(__name__)

SCHEMES = ("S1-perfect", "S2-perfect", "S1-pLSA", "S2-pLSA", "S1-baseline", "S2-baseline")
SEED_KEYS = ("world", "traffic", "learner")


class ConfigError(ValueError):
    """A configuration document is malformed; the message names the key."""


@dataclass(frozen=True)
class SimConfig:
    """Experiment constants.  Defaults reproduce the paper-scale setup."""

    K: int = 100
    F: int = 500
    M: int = 5
    Z: int = 10
    beta: float = 0.6
    alpha: float = 0.4
    side: float = 500.0
    rc: float | str = 50.0
    request_rate: float = 0.4
    period_seconds: float = 7200.0
    num_periods: int = 100
    seeds: dict = field(default_factory=lambda: {"world": 0, "traffic": 1, "learner": 2})
    schemes: tuple = SCHEMES
    epsilon: float = 1e-6
    max_iter: int = 500
    restarts: int = 1
    redraw_topology: bool = False

    def __post_init__(self):
        for name in ("K", "F", "Z", "num_periods", "max_iter", "restarts"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.M, (int, np.integer)) or self.M < 0:
            raise ConfigError(f"M must be a non-negative integer, got {self.M!r}")
        if self.M > self.F:
            raise ConfigError(f"M must not exceed F={self.F}, got {self.M}")
        try:
            kernel_exponent(self.alpha)
        except (DomainError, TypeError):
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha!r}") from None
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta!r}")
        for name in ("side", "request_rate", "period_seconds", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.rc != FULL and not (isinstance(self.rc, (int, float)) and self.rc > 0):
            raise ConfigError(f"rc must be positive or {FULL!r}, got {self.rc!r}")
        if set(self.seeds) != set(SEED_KEYS):
            raise ConfigError(f"seeds must have exactly the keys {list(SEED_KEYS)}, got {sorted(self.seeds)}")
        for key, value in self.seeds.items():
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"seeds.{key} must be a non-negative integer, got {value!r}")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            raise ConfigError(f"unknown schemes {unknown}; valid names are {list(SCHEMES)}")
        object.__setattr__(self, "schemes", tuple(self.schemes))

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        doc = dict(doc)
        if "seeds" in doc:
            if not isinstance(doc["seeds"], dict):
                raise ConfigError("seeds must be an object")
            bad = sorted(set(doc["seeds"]) - set(SEED_KEYS))
            if bad:
                raise ConfigError(f"unknown config keys {['seeds.' + b for b in bad]}")
            doc["seeds"] = {**cls().seeds, **doc["seeds"]}
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["schemes"] = list(self.schemes)
        return doc

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TimeSeries:
    """Per-scheme offloading probability, one value per period."""

    values: dict[str, np.ndarray]

    @property
    def schemes(self) -> list[str]:
        return list(self.values)

    @property
    def num_periods(self) -> int:
        return len(next(iter(self.values.values())))

    def __getitem__(self, scheme: str) -> np.ndarray:
        return self.values[scheme]

    def rows(self):
        """``(period, scheme, p_off)`` with 1-based periods, period-major."""
        for t in range(self.num_periods):
            for scheme, series in self.values.items():
                yield t + 1, scheme, float(series[t])

    def to_csv(self, sink) -> None:
        sink.write("period,scheme,p_off\n")
        for period, scheme, value in self.rows():
            sink.write(f"{period},{scheme},{value:.17g}\n")


def _world_seeds(config: SimConfig):
    world = config.seeds["world"]
    return (np.random.SeedSequence(world, spawn_key=(0,)),
            np.random.SeedSequence(world, spawn_key=(1,)))


def _topology(config: SimConfig, seed) -> Topology:
    positions = place_users(config.K, config.side, seed)
    return adjacency(positions, config.rc, side=config.side)


def build_world(config: SimConfig) -> tuple[PreferenceModel, Topology]:
    """Ground-truth preferences and user topology for ``config``'s world seed."""
    prefs_seed, topo_seed = _world_seeds(config)
    model = synth_preferences(config.F, config.K, config.beta, config.alpha, prefs_seed)
    return model, _topology(config, topo_seed)


def requests_per_period(config: SimConfig) -> int:
    return int(round(config.request_rate * config.period_seconds))


def generate_requests(model: PreferenceModel, count: int, seed=None) -> np.ndarray:
    """Count matrix of ``count`` i.i.d. requests.

    Each request picks a user from ``w`` and then a file from that user's
    preference row; the counts are drawn as a multinomial over users
    followed by a multinomial over each user's files.
    """
    if count < 0:
        raise DomainError(f"request count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    N = np.zeros((model.K, model.F), dtype=np.int64)
    if count == 0:
        return N
    per_user = rng.multinomial(count, model.w / model.w.sum())
    for k in np.flatnonzero(per_user):
        row = model.Q[k]
        N[k] = rng.multinomial(per_user[k], row / row.sum())
    return N


def run_schedule(config: SimConfig, world: tuple[PreferenceModel, Topology] | None = None) -> TimeSeries:
    """Run every configured scheme over ``config.num_periods`` periods."""
    model, topo = world if world is not None else build_world(config)
    schemes = config.schemes
    T = config.num_periods
    values = {s: np.empty(T) for s in schemes}
    count = requests_per_period(config)
    N = np.zeros((model.K, model.F), dtype=np.int64)
    learn_plsa = any(s.endswith("pLSA") for s in schemes)
    learn_baseline = any(s.endswith("baseline") for s in schemes)
    perfect = {}

    def score(C):
        return offloading_probability(model.Q, model.w, topo, C)

    for t in range(1, T + 1):
        if config.redraw_topology:
            topo = _topology(config, np.random.SeedSequence(config.seeds["world"], spawn_key=(1, t)))
            perfect = {}
        if not perfect:
            if "S1-perfect" in schemes:
                perfect["S1-perfect"] = score(greedy_cache(model.Q, model.w, topo, config.M))
            if "S2-perfect" in schemes:
                perfect["S2-perfect"] = score(popularity_cache(model.p, topo, config.M, model.K))
        for scheme, value in perfect.items():
            values[scheme][t - 1] = value

        N += generate_requests(model, count,
                               np.random.SeedSequence(config.seeds["traffic"], spawn_key=(t,)))
        if N.sum() == 0:
            raise DomainError("no requests observed yet; increase request_rate or period_seconds")

        if learn_plsa:
            params = fit(N, config.Z, config.epsilon, config.max_iter,
                         seed=config.seeds["learner"] + t, restarts=config.restarts)
            stats = predict(params)
            if "S1-pLSA" in schemes:
                values["S1-pLSA"][t - 1] = score(greedy_cache(stats.Q_hat, stats.w_hat, topo, config.M))
            if "S2-pLSA" in schemes:
                values["S2-pLSA"][t - 1] = score(popularity_cache(stats.p_hat, topo, config.M))
        if learn_baseline:
            stats = frequency_baseline(N)
            if "S1-baseline" in schemes:
                values["S1-baseline"][t - 1] = score(greedy_cache(stats.Q_hat, stats.w_hat, topo, config.M))
            if "S2-baseline" in schemes:
                values["S2-baseline"][t - 1] = score(popularity_cache(stats.p_hat, topo, config.M))
        logger.info("period %d/%d: %s", t, T,
                    ", ".join(f"{s}={values[s][t - 1]:.4f}" for s in schemes))
    return TimeSeries(values)


def run_manifest(config: SimConfig) -> dict:
    from d2dcache import __version__

    return {
        "config": config.to_dict(),
        "seeds": dict(config.seeds),
        "requests_per_period": requests_per_period(config),
        "versions": {
            "d2dcache": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }

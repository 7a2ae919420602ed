"""Cache placement for D2D offloading driven by learned user preferences."""

from d2dcache.exceptions import BudgetExceededError, ConstructionError, DomainError
from d2dcache.offload import (
    CachingMatrix,
    CoverageTable,
    incremental_gain,
    offloading_probability,
    popularity_offloading_probability,
    reachable_files,
)
from d2dcache.optimizer import brute_force_cache, greedy_cache, popularity_cache
from d2dcache.plsa import (
    PlsaParams,
    PredictedStats,
    e_step,
    fit,
    frequency_baseline,
    log_likelihood,
    m_step,
    predict,
)
from d2dcache.prefs import (
    PreferenceModel,
    aggregate_popularity,
    average_similarity,
    cosine_similarity,
    preferences_from_features,
    synth_preferences,
    zipf_popularity,
)
from d2dcache.sim import SCHEMES, SimConfig, TimeSeries, generate_requests, requests_per_period, run_schedule
from d2dcache.topology import FULL, Topology, adjacency, place_users

__version__ = "0.1.0"

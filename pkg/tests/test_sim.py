import io

import numpy as np
import pytest

from d2dcache.offload import offloading_probability
from d2dcache.optimizer import greedy_cache, popularity_cache
from d2dcache.plsa import fit, predict
from d2dcache.prefs import synth_preferences
from d2dcache.sim import (
    SCHEMES,
    ConfigError,
    SimConfig,
    TimeSeries,
    build_world,
    generate_requests,
    requests_per_period,
    run_schedule,
)

SMALL = dict(K=12, F=40, M=2, Z=3, side=200.0, rc=80.0, request_rate=0.05,
             period_seconds=3600.0, num_periods=4, max_iter=100)


@pytest.fixture(scope="module")
def small_run():
    config = SimConfig(**SMALL)
    return config, run_schedule(config)


class TestRequests:
    @pytest.mark.parametrize("rate, seconds, expected",
                             [(0.4, 7200, 2880), (1.0, 1.0, 1), (0.4, 3600, 1440)])
    def test_requests_per_period(self, rate, seconds, expected):
        assert requests_per_period(SimConfig(request_rate=rate, period_seconds=seconds)) == expected

    def test_zero_requests(self):
        model = synth_preferences(5, 3, 0.6, 0.4, seed=0)
        assert not generate_requests(model, 0, seed=1).any()

    def test_one_hot_model(self):
        model = synth_preferences(4, 2, 0.0, 1.0, seed=0)
        model = type(model)(Q=np.array([[0, 0, 1.0, 0], [0.25] * 4]), w=np.array([1.0, 0.0]), p=model.p)
        N = generate_requests(model, 7, seed=2)
        assert N[0, 2] == 7 and N.sum() == 7

    def test_empirical_joint_close_to_model(self):
        model = synth_preferences(50, 10, 0.6, 0.4, seed=3)
        N = generate_requests(model, 10**6, seed=4)
        tv = 0.5 * np.abs(N / N.sum() - model.joint()).sum()
        assert tv <= 0.01

    def test_deterministic(self):
        model = synth_preferences(20, 5, 0.6, 0.4, seed=5)
        np.testing.assert_array_equal(generate_requests(model, 500, 6), generate_requests(model, 500, 6))


class TestSchedule:
    def test_perfect_schemes_constant(self, small_run):
        config, series = small_run
        model, topo = build_world(config)
        s1 = offloading_probability(model.Q, model.w, topo, greedy_cache(model.Q, model.w, topo, config.M))
        s2 = offloading_probability(model.Q, model.w, topo, popularity_cache(model.p, topo, config.M))
        np.testing.assert_array_equal(series["S1-perfect"], s1)
        np.testing.assert_array_equal(series["S2-perfect"], s2)
        assert np.all(series["S1-perfect"] >= series["S2-perfect"])

    def test_learning_uses_cumulative_log_and_true_metric(self, small_run):
        config, series = small_run
        model, topo = build_world(config)
        N = sum(generate_requests(model, requests_per_period(config),
                                  np.random.SeedSequence(config.seeds["traffic"], spawn_key=(t,)))
                for t in (1, 2, 3))
        stats = predict(fit(N, config.Z, config.epsilon, config.max_iter, seed=config.seeds["learner"] + 3))
        cache = greedy_cache(stats.Q_hat, stats.w_hat, topo, config.M)
        assert series["S1-pLSA"][2] == offloading_probability(model.Q, model.w, topo, cache)

    def test_values_are_probabilities(self, small_run):
        _, series = small_run
        assert series.schemes == list(SCHEMES)
        for values in series.values.values():
            assert np.all((values >= 0) & (values <= 1))

    def test_reproducible(self, small_run):
        config, series = small_run
        again = run_schedule(config)
        for scheme in SCHEMES:
            np.testing.assert_array_equal(again[scheme], series[scheme])

    def test_adding_periods_keeps_prefix(self, small_run):
        config, series = small_run
        longer = run_schedule(config.replace(num_periods=5, schemes=("S1-baseline",)))
        np.testing.assert_array_equal(longer["S1-baseline"][:4], series["S1-baseline"])

    def test_single_perfect_scheme(self):
        config = SimConfig(**{**SMALL, "schemes": ["S1-perfect"]})
        series = run_schedule(config)
        assert series.schemes == ["S1-perfect"]
        assert len(set(series["S1-perfect"])) == 1

    def test_identical_users_make_schemes_coincide(self):
        config = SimConfig(**{**SMALL, "alpha": 1.0, "schemes": ["S1-perfect", "S2-perfect"]})
        series = run_schedule(config)
        np.testing.assert_allclose(series["S1-perfect"], series["S2-perfect"], atol=1e-9)

    def test_redraw_topology(self):
        config = SimConfig(**{**SMALL, "redraw_topology": True, "schemes": ["S1-perfect"]})
        series = run_schedule(config)
        assert len(set(series["S1-perfect"])) > 1


class TestTimeSeries:
    def test_csv_layout(self):
        series = TimeSeries({"S1-perfect": np.array([0.1, 1 / 3]), "S2-perfect": np.array([0.2, 0.25])})
        buf = io.StringIO()
        series.to_csv(buf)
        lines = buf.getvalue().split("\n")
        assert lines[0] == "period,scheme,p_off"
        assert lines[1] == "1,S1-perfect,0.10000000000000001"
        assert lines[3] == "2,S1-perfect,0.33333333333333331"
        assert len(lines) == 6 and lines[-1] == ""


class TestConfig:
    def test_defaults_match_paper_setup(self):
        c = SimConfig()
        assert (c.K, c.F, c.M, c.Z, c.beta, c.alpha, c.side, c.rc) == (100, 500, 5, 10, 0.6, 0.4, 500.0, 50.0)
        assert requests_per_period(c) == 2880

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="alhpa"):
            SimConfig.from_dict({"alhpa": 0.3})

    def test_unknown_seed_key(self):
        with pytest.raises(ConfigError, match="seeds.wrld"):
            SimConfig.from_dict({"seeds": {"wrld": 1}})

    def test_partial_seeds_merge_with_defaults(self):
        assert SimConfig.from_dict({"seeds": {"world": 9}}).seeds == {"world": 9, "traffic": 1, "learner": 2}

    @pytest.mark.parametrize("key, value", [("alpha", 1.5), ("alpha", 0.0), ("K", 0), ("M", 600),
                                            ("rc", -1.0), ("request_rate", 0.0), ("num_periods", 2.5)])
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigError, match=key):
            SimConfig.from_dict({key: value})

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError, match="S3-perfect"):
            SimConfig.from_dict({"schemes": ["S3-perfect"]})

    def test_full_radius_accepted(self):
        assert SimConfig.from_dict({"rc": "full"}).rc == "full"

    def test_round_trip(self):
        config = SimConfig(**SMALL)
        assert SimConfig.from_dict(config.to_dict()) == config

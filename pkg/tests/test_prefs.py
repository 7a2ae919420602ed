import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2dcache.exceptions import ConstructionError, DomainError
from d2dcache.prefs import (
    PreferenceModel,
    aggregate_popularity,
    average_similarity,
    cosine_similarity,
    preferences_from_features,
    synth_preferences,
    zipf_popularity,
)


class TestZipf:
    def test_uniform_when_beta_zero(self):
        np.testing.assert_allclose(zipf_popularity(3, 0.0), [1 / 3] * 3, atol=1e-15)

    def test_harmonic_weights(self):
        np.testing.assert_allclose(zipf_popularity(3, 1.0), [6 / 11, 3 / 11, 2 / 11], atol=1e-15)

    def test_paper_scale_head(self):
        # 1 / sum_{j<=500} j**-0.6, summed at 40 digits with mpmath.
        p = zipf_popularity(500, 0.6)
        assert p[0] == pytest.approx(0.035603079186948485559, rel=1e-13)

    def test_non_increasing_and_normalised(self):
        p = zipf_popularity(500, 0.6)
        assert np.all(np.diff(p) <= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_larger_beta_concentrates_head(self):
        heads = [zipf_popularity(100, b)[0] for b in (0.0, 0.6, 1.0)]
        assert heads[0] < heads[1] < heads[2]

    def test_empty_library_rejected(self):
        with pytest.raises(DomainError):
            zipf_popularity(0, 0.6)


class TestSyntheticModel:
    def test_kernel_example_exact(self):
        # Exponent 1/0.5**3 - 1 = 7; kernels 0.9**7 vs 0.3**7 give shares 3**7 : 1.
        model = preferences_from_features([0.1, 0.9], [0.2, 0.8], beta=0.0, alpha=0.5)
        expected_Q = np.array([[2187, 1], [1, 2187]]) / 2188
        np.testing.assert_allclose(model.Q, expected_Q, atol=1e-14)
        np.testing.assert_allclose(model.w, [0.5, 0.5], atol=1e-15)

    def test_alpha_one_gives_identical_users(self):
        model = synth_preferences(F=50, K=8, beta=0.6, alpha=1.0, seed=3)
        np.testing.assert_array_equal(model.Q, np.tile(model.p, (8, 1)))
        np.testing.assert_array_equal(model.w, np.full(8, 1 / 8))

    def test_deterministic_given_seed(self):
        a = synth_preferences(40, 10, 0.6, 0.4, seed=11)
        b = synth_preferences(40, 10, 0.6, 0.4, seed=11)
        np.testing.assert_array_equal(a.Q, b.Q)
        np.testing.assert_array_equal(a.w, b.w)

    def test_draw_order_users_then_files(self):
        model = synth_preferences(7, 4, 0.6, 0.4, seed=5)
        draws = np.random.default_rng(5).uniform(size=11)
        np.testing.assert_array_equal(model.X, draws[:4])
        np.testing.assert_array_equal(model.Y, draws[4:])

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
    def test_alpha_outside_domain(self, alpha):
        with pytest.raises(DomainError):
            synth_preferences(10, 3, 0.6, alpha, seed=0)

    def test_far_file_survives_kernel_underflow(self):
        # Exponent 1/0.05**3 - 1 = 7999: 0.2**7999 underflows, the share must not.
        model = preferences_from_features([0.0, 0.05, 0.1], [0.0, 0.05, 0.1, 0.9], beta=0.0, alpha=0.05)
        np.testing.assert_allclose(model.Q.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(model.w @ model.Q, model.p, atol=1e-12)
        # The far file goes (almost) entirely to the closest user.
        assert model.w[2] * model.Q[2, 3] == pytest.approx(0.25, rel=1e-12)

    def test_user_without_mass_is_a_construction_error(self):
        with pytest.raises(ConstructionError):
            synth_preferences(30, 200, 0.6, 0.01, seed=1)

    @settings(max_examples=60, deadline=None)
    @given(
        F=st.integers(1, 60),
        K=st.integers(1, 30),
        beta=st.floats(0.0, 1.5),
        alpha=st.floats(0.2, 1.0),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_invariants(self, F, K, beta, alpha, seed):
        model = synth_preferences(F, K, beta, alpha, seed)
        assert np.all((model.Q >= 0) & (model.Q <= 1))
        np.testing.assert_allclose(model.Q.sum(axis=1), 1.0, atol=1e-9)
        assert model.w.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.max(np.abs(aggregate_popularity(model.Q, model.w) - model.p)) <= 1e-9

    def test_json_round_trip(self):
        model = synth_preferences(12, 5, 0.6, 0.4, seed=2)
        back = PreferenceModel.from_json(model.to_json())
        np.testing.assert_array_equal(back.Q, model.Q)
        np.testing.assert_array_equal(back.w, model.w)
        doc = json.loads(model.to_json())
        assert set(doc) == {"K", "F", "alpha", "beta", "w", "Q"}


class TestSimilarity:
    def test_identical(self):
        q = [0.2, 0.3, 0.5]
        assert cosine_similarity(q, q) == pytest.approx(1.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_closed_form(self):
        assert cosine_similarity([0.5, 0.5], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(DomainError):
            cosine_similarity([0, 0], [1, 0])

    def test_average_by_enumeration(self):
        assert average_similarity([[1, 0], [0, 1], [1, 0]]) == pytest.approx(1 / 3, abs=1e-15)

    def test_average_equal_rows(self):
        Q = np.tile([0.1, 0.6, 0.3], (5, 1))
        assert average_similarity(Q) == pytest.approx(1.0, abs=1e-12)

    def test_average_matches_pairwise_loop(self):
        rng = np.random.default_rng(0)
        Q = rng.dirichlet(np.ones(6), size=7)
        pairs = [cosine_similarity(Q[i], Q[j]) for i in range(7) for j in range(i + 1, 7)]
        assert average_similarity(Q) == pytest.approx(np.mean(pairs), abs=1e-14)

    def test_needs_two_users(self):
        with pytest.raises(DomainError):
            average_similarity([[1.0, 0.0]])

    def test_alpha_one_similarity_is_one(self):
        model = synth_preferences(100, 20, 0.6, 1.0, seed=9)
        assert average_similarity(model.Q) == pytest.approx(1.0, abs=1e-9)

    def test_similarity_grows_with_alpha(self):
        means = [
            np.mean([average_similarity(synth_preferences(200, 30, 0.6, a, s).Q) for s in range(20)])
            for a in (0.2, 0.6)
        ]
        assert means[0] < means[1] < 1.0


class TestAggregate:
    def test_equal_rows(self):
        p = np.array([0.5, 0.3, 0.2])
        np.testing.assert_allclose(aggregate_popularity(np.tile(p, (3, 1)), [0.2, 0.3, 0.5]), p, atol=1e-15)

    def test_identity_rows(self):
        np.testing.assert_allclose(aggregate_popularity([[1, 0], [0, 1]], [0.6, 0.4]), [0.6, 0.4])

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            aggregate_popularity(np.ones((2, 3)) / 3, [1.0])

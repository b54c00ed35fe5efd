import numpy as np
import pytest

from discerning_td import (
    EmphasisKind,
    EmphasisSpec,
    emphasis_abs_expected_td,
    emphasis_from_counts,
    emphasis_from_noise,
    init_emphasis_state,
    long_run_count_inverse,
    make_random_walk,
    stationary_distribution,
    true_value,
    update_counts,
)


class TestSpecValidation:
    def test_constant_must_be_positive(self):
        with pytest.raises(ValueError):
            EmphasisSpec(EmphasisKind.CONSTANT, constant=0.0)

    def test_table_must_be_positive(self):
        with pytest.raises(ValueError):
            EmphasisSpec(EmphasisKind.TABLE, table=[1.0, 0.0])

    def test_table_requires_values(self):
        with pytest.raises(ValueError):
            EmphasisSpec(EmphasisKind.TABLE)

    def test_floor_range(self):
        with pytest.raises(ValueError):
            EmphasisSpec(EmphasisKind.CONSTANT, epsilon_floor=0.0)
        with pytest.raises(ValueError):
            EmphasisSpec(EmphasisKind.CONSTANT, epsilon_floor=1.0)

    def test_kind_from_string(self):
        spec = EmphasisSpec("count_inverse")
        assert spec.kind is EmphasisKind.COUNT_INVERSE


class TestCountInverse:
    def test_uniform_counts_give_uniform_weight(self):
        np.testing.assert_array_equal(emphasis_from_counts([7, 7, 7]),
                                      [1.0, 1.0, 1.0])

    def test_hand_evaluated_pipeline(self):
        # counts [1, 4]: shares [0.2, 0.8], inverses [5, 1.25],
        # scaled [1, 0.25], square root [1, 0.5]
        np.testing.assert_allclose(emphasis_from_counts([1, 4]), [1.0, 0.5],
                                   atol=1e-15)

    def test_zero_count_imputed(self):
        f = emphasis_from_counts([0, 1])
        assert np.all(np.isfinite(f))
        assert np.all((f > 0) & (f <= 1))

    def test_all_zero_counts_uniform(self):
        np.testing.assert_array_equal(emphasis_from_counts([0, 0, 0]),
                                      [1.0, 1.0, 1.0])

    def test_rejects_negative_counts(self):
        with pytest.raises(ValueError):
            emphasis_from_counts([-1, 2])

    def test_rare_state_gets_max_weight(self):
        f = emphasis_from_counts([100, 1, 50])
        assert f[1] == 1.0
        assert f[1] > f[2] > f[0]

    def test_floor_applies(self):
        f = emphasis_from_counts([10_000_000, 1], epsilon_floor=0.5)
        assert f[0] == 0.5


class TestNoisePrior:
    def test_no_noise_uniform(self):
        np.testing.assert_array_equal(emphasis_from_noise([0.0, 0.0]),
                                      [1.0, 1.0])

    def test_hand_evaluated(self):
        np.testing.assert_allclose(
            emphasis_from_noise([0.0, np.log(4.0)]), [1.0, 0.5], atol=1e-15)

    def test_monotone_decreasing_in_noise(self):
        f = emphasis_from_noise(0.1 * np.arange(1, 11))
        assert f[0] == 1.0
        assert np.all(np.diff(f) < 0)

    def test_rejects_negative_noise(self):
        with pytest.raises(ValueError):
            emphasis_from_noise([-0.1])


class TestAdaptive:
    def test_exact_values_give_uniform(self):
        mrp, fm = make_random_walk(5, "middle")
        f = emphasis_abs_expected_td(mrp, fm, true_value(mrp))
        np.testing.assert_array_equal(f, np.ones(5))

    def test_zero_weights_highlight_reward_source(self):
        # with theta = 0 the expected one-step error is |r|, nonzero only
        # at the state adjacent to the paying terminal
        mrp, fm = make_random_walk(5, "middle")
        f = emphasis_abs_expected_td(mrp, fm, np.zeros(5),
                                     epsilon_floor=1e-3)
        np.testing.assert_allclose(f, [1e-3, 1e-3, 1e-3, 1e-3, 1.0])

    def test_output_bounds(self):
        mrp, fm = make_random_walk(5, "middle")
        rng = np.random.default_rng(5)
        for _ in range(50):
            f = emphasis_abs_expected_td(mrp, fm, rng.normal(0, 2, 5))
            assert np.all(f >= 1e-3) and np.all(f <= 1.0)

    def test_depends_only_on_value_estimates(self):
        mrp, fm = make_random_walk(5, "middle")
        theta = np.array([0.3, -0.2, 0.9, 0.0, 1.4])
        a = emphasis_abs_expected_td(mrp, fm, theta)
        b = emphasis_abs_expected_td(mrp, fm, theta.copy())
        np.testing.assert_array_equal(a, b)


class TestPipelineRoundTrip:
    def test_square_recovers_scaled_quantity(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            counts = rng.integers(1, 40, size=5)
            f = emphasis_from_counts(counts, epsilon_floor=1e-12)
            share = counts / counts.sum()
            scaled = (1.0 / share) / (1.0 / share).max()
            np.testing.assert_allclose(f ** 2, scaled, atol=1e-14)


class TestState:
    def test_initial_states(self):
        mrp, _ = make_random_walk(5, "middle")
        state = init_emphasis_state(EmphasisSpec("count_inverse"), mrp)
        np.testing.assert_array_equal(state.values, np.ones(5))
        np.testing.assert_array_equal(state.visit_counts, np.zeros(5))
        const = init_emphasis_state(
            EmphasisSpec("constant", constant=2.0), mrp)
        np.testing.assert_array_equal(const.values, np.full(5, 2.0))

    def test_table_length_checked(self):
        mrp, _ = make_random_walk(5, "middle")
        with pytest.raises(ValueError):
            init_emphasis_state(
                EmphasisSpec(EmphasisKind.TABLE, table=[1.0, 1.0]), mrp)

    def test_update_counts_records_visit(self):
        mrp, _ = make_random_walk(5, "middle")
        state = init_emphasis_state(EmphasisSpec("count_inverse"), mrp)
        update_counts(2, state)
        np.testing.assert_array_equal(state.visit_counts, [0, 0, 1, 0, 0])

    def test_update_counts_wrong_kind(self):
        mrp, _ = make_random_walk(5, "middle")
        state = init_emphasis_state(EmphasisSpec("noise_prior"), mrp)
        with pytest.raises(ValueError):
            update_counts(0, state)

    def test_uniform_visits_converge_to_uniform(self):
        mrp, _ = make_random_walk(5, "middle")
        state = init_emphasis_state(EmphasisSpec("count_inverse"), mrp)
        for _ in range(200):
            for s in range(5):
                update_counts(s, state)
        np.testing.assert_array_equal(state.values, np.ones(5))

    def test_heavy_state_gets_minimal_weight(self):
        mrp, _ = make_random_walk(5, "middle")
        state = init_emphasis_state(EmphasisSpec("count_inverse"), mrp)
        for s, times in ((0, 50), (1, 5), (2, 5), (3, 5), (4, 5)):
            for _ in range(times):
                update_counts(s, state)
        assert np.argmin(state.values) == 0
        assert np.all(state.values[1:] > state.values[0])


class TestLongRunLimit:
    def test_matches_pipeline_on_stationary_shares(self):
        mrp, _ = make_random_walk(5, "middle")
        d = stationary_distribution(mrp)
        expected = np.sqrt((1.0 / d) / (1.0 / d).max())
        np.testing.assert_allclose(long_run_count_inverse(mrp), expected,
                                   atol=1e-14)

    def test_online_counts_approach_limit(self):
        mrp, _ = make_random_walk(5, "middle")
        rng = np.random.default_rng(7)
        state = init_emphasis_state(EmphasisSpec("count_inverse"), mrp)
        from discerning_td import TERMINAL, sample_transition
        s = 2
        for _ in range(200_000):
            update_counts(s, state)
            _, nxt = sample_transition(mrp, s, rng)
            s = 2 if nxt == TERMINAL else nxt
        np.testing.assert_allclose(state.values, long_run_count_inverse(mrp),
                                   atol=0.01)

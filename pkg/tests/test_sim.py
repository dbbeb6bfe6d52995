import numpy as np
import pytest

from seppchange import (
    CoefficientSequence,
    ModelConfig,
    ScenarioSpec,
    build_scenario,
    design_function,
    generate_series,
    min_spacing_and_jump,
    next_column,
    union_support_size,
)


class TestDesignFunction:
    def test_clips(self):
        assert np.array_equal(design_function(np.array([7, 3]), 6.0), [6.0, 3.0])

    def test_zero_history(self):
        assert np.array_equal(design_function(np.zeros(3), 4.0), np.zeros(3))

    def test_boundary(self):
        assert np.array_equal(design_function(np.array([5]), 5.0), [5.0])

    def test_rejects_nonpositive_clip(self):
        with pytest.raises(ValueError):
            design_function(np.array([1.0]), 0.0)


class TestScenarioSpec:
    def test_setting_b_needs_divisible_T(self):
        with pytest.raises(ValueError):
            ScenarioSpec(kind="b", T=301)

    def test_setting_c_needs_wide_enough_M(self):
        with pytest.raises(ValueError):
            ScenarioSpec(kind="c", M=11)

    def test_setting_a_needs_positive_rho(self):
        with pytest.raises(ValueError):
            ScenarioSpec(kind="a", rho=-0.1)

    def test_noncanonical_rho_warns(self):
        with pytest.warns(UserWarning):
            ScenarioSpec(kind="a", rho=0.17)

    def test_canonical_rho_silent(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ScenarioSpec(kind="a", rho=0.25)

    def test_custom_needs_parts(self):
        with pytest.raises(ValueError):
            ScenarioSpec(kind="custom", T=10)


class TestSettingA:
    def test_structure(self):
        seq, config, T = build_scenario(ScenarioSpec(kind="a", rho=0.35))
        assert (T, seq.M) == (300, 30)
        assert config.v == 0.5 and config.clip == 6.0
        assert seq.change_points == (151,)
        for _, a in seq.segments:
            rownorms = np.abs(a).sum(axis=1)
            assert rownorms == pytest.approx(np.full(30, 0.70), abs=1e-12)
            assert np.all(a[:, 2:] == 0)

    def test_jump_size(self):
        seq, _, T = build_scenario(ScenarioSpec(kind="a", rho=0.35))
        _, kappa = min_spacing_and_jump(seq, T)
        # the two signal columns flip sign: 2M entries each jumping 2*rho
        assert kappa == pytest.approx(0.70 * np.sqrt(2 * 30), rel=1e-12)

    def test_min_spacing(self):
        seq, _, T = build_scenario(ScenarioSpec(kind="a", rho=0.2))
        delta, _ = min_spacing_and_jump(seq, T)
        assert delta == 150

    def test_columns_swap(self):
        seq, _, _ = build_scenario(ScenarioSpec(kind="a", rho=0.3))
        a1, a2 = seq.segments[0][1], seq.segments[1][1]
        assert np.array_equal(a1[:, 0], a2[:, 1])
        assert np.array_equal(a1[:, 1], a2[:, 0])
        assert a1[0, 0] == 0.3 and a1[1, 0] == -0.3  # odd coords +rho in column 1


class TestSettingB:
    def test_structure(self):
        seq, config, T = build_scenario(ScenarioSpec(kind="b", T=300))
        assert T == 300 and seq.M == 40
        assert config.v == 0.25 and config.clip == 8.0
        assert seq.change_points == (101, 201)
        for _, a in seq.segments:
            assert np.all(np.abs(a[np.abs(np.subtract.outer(range(40), range(40))) > 1]) == 0)
            band = a[a != 0]
            assert np.all(np.abs(band) == 0.15)
            assert np.abs(a).sum(axis=1).max() <= 0.45 + 1e-15

    def test_band_signs(self):
        seq, _, _ = build_scenario(ScenarioSpec(kind="b", T=180))
        a1, a2, a3 = (a for _, a in seq.segments)
        assert a1[0, 0] == 0.15 and a2[0, 0] == -0.15 and a3[0, 0] == 0.15
        assert a1[0, 1] == -0.15 and a2[0, 1] == 0.15 and a3[0, 1] == 0.15
        assert a1[1, 0] == 0.15 and a2[1, 0] == 0.15 and a3[1, 0] == -0.15


class TestSettingC:
    def test_structure(self):
        seq, config, T = build_scenario(ScenarioSpec(kind="c", M=15))
        assert T == 450 and seq.M == 15
        assert config.v == 0.2 and config.clip == 4.0
        assert seq.change_points == (151, 301)
        # support of the third pattern reaches coordinate 12
        assert seq.segments[0][1][11, 2] != 0
        assert union_support_size(seq) <= 36
        assert np.all(seq.segments[0][1][:, 3:] == 0)

    def test_column_rotation(self):
        seq, _, _ = build_scenario(ScenarioSpec(kind="c", M=20))
        a1, a2, a3 = (a for _, a in seq.segments)
        assert np.array_equal(a1[:, 1], a2[:, 0])  # second pattern moves to column 1
        assert np.array_equal(a2[:, 1], a2[:, 2])  # middle segment repeats pattern 3
        assert np.array_equal(a3[:, 2], a1[:, 0])  # first pattern ends in column 3


class TestGenerateSeries:
    def test_deterministic_golden(self):
        seq = CoefficientSequence(((1, np.zeros((2, 2))),))
        cfg = ModelConfig(v=np.log(2.0), clip=4.0)
        s = generate_series(seq, cfg, T=6, seed=42)
        assert np.array_equal(
            s.counts, np.array([[2, 0, 0, 3, 3, 2], [2, 3, 1, 2, 5, 1]])
        )

    def test_replication_substream_golden(self):
        seq = CoefficientSequence(((1, np.zeros((2, 2))),))
        cfg = ModelConfig(v=np.log(2.0), clip=4.0)
        s = generate_series(seq, cfg, T=6, seed=42, replication=3)
        assert np.array_equal(
            s.counts, np.array([[3, 3, 4, 5, 0, 1], [1, 2, 2, 1, 2, 3]])
        )

    def test_coupled_dynamics_golden(self):
        a = np.zeros((2, 2))
        a[0, 1] = 0.6
        a[1, 0] = -0.4
        seq = CoefficientSequence(((1, a),))
        s = generate_series(seq, ModelConfig(v=0.1, clip=3.0), T=8, seed=7)
        assert np.array_equal(
            s.counts,
            np.array([[1, 2, 6, 0, 1, 1, 1, 1], [1, 1, 0, 1, 0, 1, 1, 0]]),
        )

    def test_same_seed_identical(self):
        seq, cfg, T = build_scenario(ScenarioSpec(kind="a", rho=0.35))
        s1 = generate_series(seq, cfg, T, seed=11)
        s2 = generate_series(seq, cfg, T, seed=11)
        assert np.array_equal(s1.counts, s2.counts)

    def test_different_seed_differs(self):
        seq = CoefficientSequence(((1, np.zeros((3, 3))),))
        cfg = ModelConfig(v=1.0, clip=4.0)
        s1 = generate_series(seq, cfg, 50, seed=1)
        s2 = generate_series(seq, cfg, 50, seed=2)
        assert not np.array_equal(s1.counts, s2.counts)

    def test_iid_poisson_law_of_large_numbers(self):
        # all-zero coefficients make the series iid Poisson(exp(v))
        seq = CoefficientSequence(((1, np.zeros((3, 3))),))
        cfg = ModelConfig(v=np.log(2.0), clip=6.0)
        s = generate_series(seq, cfg, T=10000, seed=5)
        means = s.counts.mean(axis=1)
        assert np.all(np.abs(means - 2.0) < 3.0 * np.sqrt(2.0 / 10000))

    def test_rejects_seq_beyond_T(self):
        a = np.eye(2) * 0.5
        seq = CoefficientSequence(((1, a), (51, -a)))
        with pytest.raises(ValueError):
            generate_series(seq, ModelConfig(v=0.0, clip=2.0), T=30, seed=0)

    def test_intensity_bound_guard(self):
        # feeding an infeasible matrix directly trips the bound check
        bad = np.full((2, 2), 2.0)
        with pytest.raises(RuntimeError):
            next_column(
                bad, ModelConfig(v=0.0, clip=3.0), np.array([3, 3]), t=1, seed=0
            )

    def test_setting_a_generation_respects_bound(self):
        # a full scenario run never trips the intensity bound assertion
        seq, cfg, T = build_scenario(ScenarioSpec(kind="a", rho=0.35))
        s = generate_series(seq, cfg, T, seed=3)
        assert s.counts.max() < np.exp(cfg.v + cfg.clip) * 10

    def test_regime_at_transition_uses_new_matrix(self):
        # With a silent first regime (zero matrix, very negative intercept is
        # not possible; use v=0 -> intensity 1) and a second regime whose
        # matrix suppresses everything, the law of X at the change point
        # already reflects the new matrix.  Check via the one-step sampler.
        m = np.zeros((1, 1))
        a2 = np.array([[-1.0]])
        seq = CoefficientSequence(((1, m), (3, a2)))
        cfg = ModelConfig(v=0.0, clip=5.0)
        prev = np.array([5])
        draws = [
            next_column(seq.matrix_at(3), cfg, prev, t=2, seed=s)[0]
            for s in range(400)
        ]
        # intensity exp(0 - 5) ~ 0.0067: essentially all draws are zero
        assert np.mean(np.asarray(draws) == 0) > 0.97

    def test_conditional_independence_across_redraws(self):
        a = np.zeros((3, 3))
        a[0, 1] = 0.5
        a[1, 2] = -0.5
        a[2, 0] = 0.5
        seq = CoefficientSequence(((1, a),))
        cfg = ModelConfig(v=0.3, clip=4.0)
        prev = np.array([2, 1, 3])
        n = 10000
        draws = np.stack(
            [
                next_column(seq.matrix_at(2), cfg, prev, t=1, seed=99, replication=r)
                for r in range(n)
            ]
        )
        for i in range(3):
            for j in range(i + 1, 3):
                r = np.corrcoef(draws[:, i], draws[:, j])[0, 1]
                assert abs(r) < 4.0 / np.sqrt(n)

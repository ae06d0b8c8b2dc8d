import math

import numpy as np
import pytest

from explet.errors import BadK, ConfigError, DimMismatch, TooFewSamples
from explet.stfeat import StmFeatureSet
from explet.umm import (EmConfig, UmmModel, component_density,
                        component_log_density, fit_hard, fit_soft,
                        rigid_blocks, train_em)

import oracles


def plain_model(weights, means, sigmas):
    """Model with identity standardization (raw space == model space)."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    d = means.shape[1]
    return UmmModel(weights=np.asarray(weights, dtype=np.float64),
                    means=means, sigmas=np.asarray(sigmas, dtype=np.float64),
                    std_mean=np.zeros(d), std_scale=np.ones(d))


def make_stm(features, counts=None):
    return StmFeatureSet("v", "s", 0, np.asarray(features, dtype=np.float64),
                         grid_counts=counts)


class TestComponentDensity:
    def test_standard_normal_at_mean(self):
        model = plain_model([1.0], [[0.0]], [1.0])
        dens = component_density(model, np.array([0.0]), 0)
        assert dens == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-12)

    def test_closed_form_at_mean(self):
        w, sigma, d = 0.3, 0.7, 5
        model = plain_model([w, 0.7], np.vstack([np.ones(d), np.zeros(d)]),
                            [sigma, 1.0])
        dens = component_density(model, np.ones(d), 0)
        assert dens == pytest.approx(w * (2 * math.pi * sigma ** 2) ** (-d / 2),
                                     rel=1e-12)

    def test_matches_product_of_univariates_oracle(self, rng):
        model = plain_model([0.25], [rng.standard_normal(3)], [1.3])
        f = rng.standard_normal(3)
        ours = component_density(model, f, 0)
        oracle = oracles.density_product_of_univariates(f, model.means[0], 1.3, 0.25)
        assert ours == pytest.approx(oracle, rel=1e-12)

    def test_dim_mismatch(self):
        model = plain_model([1.0], [[0.0, 0.0]], [1.0])
        with pytest.raises(DimMismatch):
            component_log_density(model, np.zeros(3), 0)


class TestTrainEm:
    def test_two_separated_clouds(self, rng):
        a = rng.normal((0.0, 0.0), 1.0, size=(300, 2))
        b = rng.normal((10.0, 10.0), 1.0, size=(300, 2))
        X = np.vstack([a, b])
        model = train_em(X, 2, EmConfig(seed=3, standardize=False, loc_dims=0))
        # oracle: the sample centroids of the generated clouds
        cents = np.vstack([a.mean(axis=0), b.mean(axis=0)])
        order = np.argsort(model.means[:, 0])
        np.testing.assert_allclose(model.means[order], cents, atol=0.1)
        np.testing.assert_allclose(model.weights, [0.5, 0.5], atol=0.05)

    def test_k1_closed_form(self, rng):
        X = rng.standard_normal((100, 4)) * 2.0 + 1.0
        model = train_em(X, 1, EmConfig(standardize=False, loc_dims=0))
        np.testing.assert_allclose(model.means[0], X.mean(axis=0), rtol=1e-12)
        assert model.weights[0] == 1.0
        assert model.sigmas[0] == pytest.approx(
            math.sqrt(X.var(axis=0).mean()), rel=1e-12)

    def test_degenerate_identical_features(self):
        X = np.ones((50, 3))
        model = train_em(X, 1, EmConfig(standardize=False, loc_dims=0))
        assert model.sigmas[0] == pytest.approx(1e-4)
        assert np.isfinite(model.ll_history).all()

    def test_ll_monotone_and_recorded(self, rng):
        X = rng.standard_normal((400, 5))
        model = train_em(X, 3, EmConfig(seed=1, standardize=False, loc_dims=0))
        assert model.n_reseeds == 0
        assert np.all(np.diff(model.ll_history) >= -1e-9)

    def test_responsibilities_sum_to_one(self, rng):
        X = rng.standard_normal((200, 4))
        model = train_em(X, 4, EmConfig(seed=2, standardize=False, loc_dims=0))
        logd = model.log_densities(X)
        m = logd.max(axis=1, keepdims=True)
        resp = np.exp(logd - m)
        resp /= resp.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-9)

    def test_seeded_determinism(self, rng):
        X = rng.standard_normal((300, 6))
        m1 = train_em(X, 3, EmConfig(seed=9))
        m2 = train_em(X, 3, EmConfig(seed=9))
        np.testing.assert_array_equal(m1.means, m2.means)
        np.testing.assert_array_equal(m1.sigmas, m2.sigmas)
        np.testing.assert_array_equal(m1.weights, m2.weights)

    def test_permutation_invariance_bitwise(self, rng):
        X = rng.standard_normal((250, 5))
        m1 = train_em(X, 3, EmConfig(seed=4))
        m2 = train_em(X[rng.permutation(250)], 3, EmConfig(seed=4))
        np.testing.assert_array_equal(m1.means, m2.means)
        np.testing.assert_array_equal(m1.sigmas, m2.sigmas)

    def test_standardization_stored_and_used(self, rng):
        X = rng.standard_normal((200, 5)) * 100.0
        X[:, -3:] = rng.random((200, 3))  # loc dims stay raw
        model = train_em(X, 1, EmConfig(seed=0))
        np.testing.assert_allclose(model.std_mean[:2], X[:, :2].mean(axis=0))
        np.testing.assert_array_equal(model.std_mean[2:], 0.0)
        np.testing.assert_allclose(model.means_raw[0], X.mean(axis=0), atol=1e-8)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            train_em(np.zeros((3, 2)), 4)

    def test_diag_covariance_variant(self, rng):
        X = rng.standard_normal((300, 4)) * np.array([1.0, 5.0, 0.2, 1.0])
        model = train_em(X, 1, EmConfig(cov="diag", standardize=False, loc_dims=0))
        assert model.sigmas.shape == (1, 4)
        np.testing.assert_allclose(model.sigmas[0], X.std(axis=0), rtol=1e-10)


class TestFitSoft:
    def test_k1_top3_are_nearest_to_mean(self):
        model = plain_model([1.0], [[0.0, 0.0]], [1.0])
        feats = np.array([[0.1, 0], [5, 0], [0.2, 0], [3, 0], [0.05, 0]])
        stm = make_stm(feats)
        aligned = fit_soft(stm, model, T=3)
        dists = np.linalg.norm(feats, axis=1)
        expect = set(np.argsort(dists)[:3])
        assert set(aligned.modes[0].indices.tolist()) == expect

    def test_T_geq_B_takes_everything(self, rng):
        model = plain_model([0.5, 0.5], rng.standard_normal((2, 3)), [1.0, 1.0])
        stm = make_stm(rng.standard_normal((4, 3)))
        aligned = fit_soft(stm, model, T=10)
        for mode in aligned.modes:
            assert mode.size == 4

    def test_matches_full_sort_oracle(self, rng):
        model = plain_model(np.full(4, 0.25), rng.standard_normal((4, 6)),
                            rng.uniform(0.5, 2.0, 4))
        feats = rng.standard_normal((50, 6))
        aligned = fit_soft(make_stm(feats), model, T=8)
        for k in range(4):
            dens = np.array([oracles.density_product_of_univariates(
                f, model.means[k], model.sigmas[k], model.weights[k])
                for f in feats])
            expect = np.argsort(-dens, kind="stable")[:8]
            np.testing.assert_array_equal(aligned.modes[k].indices, expect)

    def test_probs_non_increasing_and_size(self, rng):
        model = plain_model(np.full(3, 1 / 3), rng.standard_normal((3, 4)),
                            np.ones(3))
        stm = make_stm(rng.standard_normal((30, 4)))
        aligned = fit_soft(stm, model, T=12)
        for mode in aligned.modes:
            assert mode.size == 12
            assert np.all(np.diff(mode.log_probs) <= 0)

    def test_T_below_2_rejected(self, rng):
        model = plain_model([1.0], [[0.0]], [1.0])
        with pytest.raises(ConfigError):
            fit_soft(make_stm([[0.0]]), model, T=1)


class TestFitHard:
    def test_tie_goes_to_lower_component(self):
        model = plain_model([0.5, 0.5], [[-1.0], [1.0]], [1.0, 1.0])
        aligned = fit_hard(make_stm([[0.0]]), model)
        assert aligned.modes[0].size == 1
        assert aligned.modes[1].size == 0

    def test_k1_takes_all(self, rng):
        model = plain_model([1.0], [rng.standard_normal(3)], [1.0])
        aligned = fit_hard(make_stm(rng.standard_normal((20, 3))), model)
        assert aligned.modes[0].size == 20

    def test_matches_argmax_oracle(self, rng):
        model = plain_model(np.full(3, 1 / 3), rng.standard_normal((3, 5)),
                            rng.uniform(0.5, 1.5, 3))
        feats = rng.standard_normal((40, 5))
        aligned = fit_hard(make_stm(feats), model)
        logd = model.log_densities(feats)
        expect = np.argmax(logd, axis=1)
        got = np.empty(40, dtype=int)
        for mode in aligned.modes:
            got[mode.indices] = mode.mode_index
        np.testing.assert_array_equal(got, expect)

    def test_partition_property(self, rng):
        model = plain_model(np.full(4, 0.25), rng.standard_normal((4, 3)),
                            np.ones(4))
        feats = rng.standard_normal((33, 3))
        aligned = fit_hard(make_stm(feats), model)
        all_idx = np.concatenate([m.indices for m in aligned.modes])
        assert sorted(all_idx.tolist()) == list(range(33))


class TestRigidBlocks:
    def make_loc_stm(self, locs, lstar=4):
        locs = np.asarray(locs, dtype=np.float64)
        feats = np.hstack([np.zeros((locs.shape[0], 2)), locs])
        return make_stm(feats, counts=(4, 4, lstar))

    def test_k16_single_temporal_segment(self):
        stm = self.make_loc_stm([[0.1, 0.2, 0.9], [0.3, 0.1, 0.0]])
        aligned = rigid_blocks(stm, 16)
        assert aligned.K == 16
        # both features have x, y in [0, 0.25) x [0.25, 0.5) etc.
        assert aligned.modes[0].size == 1   # (x<0.25, y<0.25)
        assert 0 in aligned.modes[0].indices or 1 in aligned.modes[0].indices

    def test_k16_low_corner_lands_in_mode0(self, rng):
        locs = np.column_stack([rng.uniform(0, 0.24, 20),
                                rng.uniform(0, 0.24, 20),
                                rng.uniform(0, 1, 20)])
        aligned = rigid_blocks(self.make_loc_stm(locs), 16)
        assert aligned.modes[0].size == 20

    def test_k32_two_temporal_partitions(self):
        stm = self.make_loc_stm([[0.0, 0.0, 0.1], [0.0, 0.0, 0.6]])
        aligned = rigid_blocks(stm, 32)
        assert aligned.K == 32
        assert 0 in aligned.modes[0].indices       # t < 0.5 -> segment 0
        assert 1 in aligned.modes[16].indices      # t >= 0.5 -> segment 1

    def test_mode_order_t_major_then_y_x(self):
        stm = self.make_loc_stm([[0.8, 0.3, 0.7]])  # xcell 3, ycell 1, tseg 1
        aligned = rigid_blocks(stm, 32)
        assert aligned.modes[1 * 16 + 1 * 4 + 3].size == 1

    def test_uniform_locs_counts_within_multinomial_3sigma(self, rng):
        B, K = 4000, 16
        locs = rng.random((B, 3))
        aligned = rigid_blocks(self.make_loc_stm(locs), K)
        counts = np.array([m.size for m in aligned.modes])
        p = 1.0 / K
        sigma = math.sqrt(B * p * (1 - p))
        assert np.all(np.abs(counts - B * p) <= 3 * sigma + 1e-9)

    def test_bad_k(self):
        stm = self.make_loc_stm([[0.0, 0.0, 0.0]], lstar=2)
        with pytest.raises(BadK):
            rigid_blocks(stm, 12)
        with pytest.raises(BadK):
            rigid_blocks(stm, 64)   # K/16 = 4 > lstar = 2

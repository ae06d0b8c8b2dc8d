import numpy as np
import pytest

from explet.errors import DimMismatch, EmptyStm
from explet.fv import encode_fv, fisher_dim
from explet.umm import UmmModel

import oracles


def plain_model(weights, means, sigmas):
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    d = means.shape[1]
    return UmmModel(weights=np.asarray(weights, dtype=np.float64), means=means,
                    sigmas=np.asarray(sigmas, dtype=np.float64),
                    std_mean=np.zeros(d), std_scale=np.ones(d))


class TestClosedForms:
    def test_features_at_mean_single_component(self):
        d = 4
        model = plain_model([1.0], [np.zeros(d)], [1.0])
        F = np.zeros((7, d))
        raw = encode_fv(F, model, normalized=False)
        np.testing.assert_allclose(raw[:d], 0.0, atol=1e-15)
        np.testing.assert_allclose(raw[d:], -1.0 / np.sqrt(2.0), atol=1e-12)

    def test_dimension_2dK(self, rng):
        model = plain_model([1.0], [np.zeros(64)], [1.0])
        assert fisher_dim(model) == 128
        v = encode_fv(rng.standard_normal((5, 64)), model)
        assert v.shape == (128,)
        model3 = plain_model(np.full(3, 1 / 3), rng.standard_normal((3, 10)),
                             np.ones(3))
        assert fisher_dim(model3) == 60
        assert encode_fv(rng.standard_normal((4, 10)), model3).shape == (60,)


class TestOracleEquivalence:
    def test_matches_naive_summation(self, rng):
        model = plain_model(np.array([0.5, 0.2, 0.3]),
                            rng.standard_normal((3, 6)),
                            rng.uniform(0.6, 1.5, 3))
        F = rng.standard_normal((30, 6))
        ours = encode_fv(F, model)
        ref = oracles.fisher_vector_naive(F, model)
        np.testing.assert_allclose(ours, ref, atol=1e-10)

    def test_matches_naive_summation_diag(self, rng):
        model = UmmModel(weights=np.array([0.4, 0.6]),
                         means=rng.standard_normal((2, 4)),
                         sigmas=rng.uniform(0.5, 2.0, (2, 4)),
                         std_mean=np.zeros(4), std_scale=np.ones(4))
        F = rng.standard_normal((12, 4))
        np.testing.assert_allclose(encode_fv(F, model),
                                   oracles.fisher_vector_naive(F, model),
                                   atol=1e-10)


class TestInvariants:
    def test_unit_norm(self, rng):
        model = plain_model(np.full(2, 0.5), rng.standard_normal((2, 5)),
                            np.ones(2))
        v = encode_fv(rng.standard_normal((20, 5)), model)
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-6

    def test_permutation_bit_identical(self, rng):
        model = plain_model(np.full(2, 0.5), rng.standard_normal((2, 5)),
                            np.ones(2))
        F = rng.standard_normal((25, 5))
        v1 = encode_fv(F, model)
        v2 = encode_fv(F[rng.permutation(25)], model)
        np.testing.assert_array_equal(v1, v2)

    def test_duplication_invariance(self, rng):
        model = plain_model(np.full(3, 1 / 3), rng.standard_normal((3, 4)),
                            np.ones(3))
        F = rng.standard_normal((15, 4))
        v1 = encode_fv(F, model)
        v2 = encode_fv(np.vstack([F, F]), model)
        np.testing.assert_allclose(v1, v2, atol=1e-10)

    def test_empty_raises(self):
        model = plain_model([1.0], [[0.0]], [1.0])
        with pytest.raises(EmptyStm):
            encode_fv(np.zeros((0, 1)), model)

    def test_dim_mismatch(self, rng):
        model = plain_model([1.0], [[0.0, 0.0]], [1.0])
        with pytest.raises(DimMismatch):
            encode_fv(rng.standard_normal((4, 3)), model)

    def test_marginal_model_encoding(self, rng):
        # appearance-only FV goes through the marginalized mixture
        full = UmmModel(weights=np.array([1.0]),
                        means=rng.standard_normal((1, 7)),
                        sigmas=np.array([1.2]),
                        std_mean=rng.standard_normal(7),
                        std_scale=rng.uniform(0.5, 2.0, 7))
        marg = full.marginal(4)
        assert marg.d == 4
        F = rng.standard_normal((10, 4))
        v = encode_fv(F, marg)
        assert v.shape == (2 * 4 * 1,)

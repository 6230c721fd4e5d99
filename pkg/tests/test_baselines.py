import numpy as np
import pytest

from nestedkrig.baselines import (BaselineResult, bcm, evaluate, gpoe, poe,
                                  rbcm, spv)


class TestPoe:
    def test_single_expert(self):
        res = poe([1.5], [0.7])
        assert (res.mean, res.variance) == (1.5, 0.7)

    def test_two_experts_hand(self):
        res = poe([0.0, 2.0], [1.0, 1.0])
        assert res.mean == pytest.approx(1.0)
        assert res.variance == pytest.approx(0.5)

    def test_identical_experts_overconfident(self):
        res = poe([0.3] * 5, [0.8] * 5)
        assert res.mean == pytest.approx(0.3)
        assert res.variance == pytest.approx(0.8 / 5)

    def test_interpolating_expert_short_circuit(self):
        res = poe([1.0, 9.9], [0.5, 1e-14], prior_var=1.0)
        assert res.degenerate
        assert res.mean == 9.9
        assert res.variance == 1e-14

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            poe([0.0], [0.0])


class TestGpoe:
    def test_uniform_identical_experts(self):
        res = gpoe([0.4] * 7, [0.9] * 7, prior_var=1.0)
        assert res.mean == pytest.approx(0.4)
        assert res.variance == pytest.approx(0.9)

    def test_uniform_mean_equals_poe_exactly(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = int(rng.integers(2, 12))
            M = rng.standard_normal(p)
            V = rng.uniform(0.05, 1.0, p)
            a = poe(M, V)
            b = gpoe(M, V, prior_var=1.0)
            assert a.mean == b.mean  # bitwise: same relative weights
            assert b.variance == pytest.approx(p * a.variance, rel=1e-12)

    def test_entropy_weights_hand(self):
        res = gpoe([0.0, 2.0], [0.5, 1.0], prior_var=1.0,
                   weighting="differential_entropy")
        beta1 = 0.5 * np.log(2.0)
        assert res.mean == pytest.approx(0.0)
        assert res.variance == pytest.approx(0.5 / beta1)
        np.testing.assert_allclose(res.weights, [beta1, 0.0])

    def test_all_zero_weights_returns_prior(self):
        res = gpoe([0.7, -0.7], [1.0, 1.0], prior_var=1.0,
                   weighting="differential_entropy")
        assert res.degenerate
        assert res.mean == 0.0
        assert res.variance == 1.0

    def test_entropy_weight_clamped_nonnegative(self):
        res = gpoe([1.0, 2.0], [0.5, 1.5], prior_var=1.0,
                   weighting="differential_entropy")
        assert np.all(res.weights >= 0.0)
        assert res.weights[1] == 0.0


class TestBcmRbcm:
    def test_bcm_single_expert(self):
        res = bcm([1.2], [0.4], prior_var=1.0)
        assert res.mean == pytest.approx(1.2)
        assert res.variance == pytest.approx(0.4)

    def test_bcm_uninformative_experts_recover_prior(self):
        res = bcm([0.0] * 6, [2.5] * 6, prior_var=2.5)
        assert res.mean == pytest.approx(0.0)
        assert res.variance == pytest.approx(2.5)

    def test_rbcm_with_unit_weights_is_bcm(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            p = int(rng.integers(1, 9))
            M = rng.standard_normal(p)
            V = rng.uniform(0.1, 0.9, p)
            a = bcm(M, V, prior_var=1.0)
            b = rbcm(M, V, prior_var=1.0, beta=np.ones(p))
            assert a.mean == b.mean
            assert a.variance == b.variance

    def test_bcm_degeneracy_flagged_not_fatal(self):
        # experts less precise than the prior drive the precision negative
        res = bcm([0.0, 0.0, 0.0], [4.0, 4.0, 4.0], prior_var=1.0)
        assert res.degenerate
        assert res.variance > 0.0

    def test_rbcm_default_weights(self):
        res = rbcm([0.5, -0.5], [0.25, 0.5], prior_var=1.0)
        expected = 0.5 * (np.log(1.0) - np.log(np.array([0.25, 0.5])))
        np.testing.assert_allclose(res.weights, expected)


class TestSpv:
    def test_picks_smallest_variance(self):
        res = spv([5.0, 6.0, 7.0], [3.0, 1.0, 2.0])
        assert (res.mean, res.variance) == (6.0, 1.0)

    def test_tie_breaks_low_index(self):
        res = spv([1.0, 2.0], [1.0, 1.0])
        assert res.mean == 1.0

    def test_interpolating_expert_wins(self):
        res = spv([0.1, 4.2], [0.9, 0.0 + 1e-18])
        assert res.mean == 4.2


def test_dispatcher_covers_all_methods():
    M, V = [0.1, 0.2], [0.5, 0.6]
    for method in ("poe", "gpoe1", "gpoe2", "bcm", "rbcm", "spv"):
        res = evaluate(method, M, V, prior_var=1.0)
        assert isinstance(res, BaselineResult)
        assert res.method == method
        assert res.variance > 0.0
    with pytest.raises(ValueError):
        evaluate("nope", M, V, 1.0)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infoprop.ensemble import EnsemblePredictions
from infoprop.fusion import ci_fuse, ci_fuse_arrays, epistemic_variance, epistemic_variance_arrays, fuse
from infoprop.gaussian import DENSE, DIAGONAL
from infoprop.oracles import (
    SingularJointError,
    mean_outer_product,
    oracle_kalman_fusion_dense,
    precision_weighted_mean,
    random_spd,
)

means_st = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=st.floats(-50, 50))


def diag_preds(means, variances):
    return EnsemblePredictions.from_arrays(np.asarray(means, float), np.asarray(variances, float))


class TestCIFuse:
    def test_hand_example_equal_variances(self):
        mu, var = ci_fuse(diag_preds([[0.0], [2.0]], [[1.0], [1.0]]))
        assert mu[0] == 1.0 and var[0] == 1.0

    def test_hand_example_unequal_variances(self):
        mu, var = ci_fuse(diag_preds([[0.0], [3.0]], [[1.0], [4.0]]))
        assert mu[0] == 0.6 and var[0] == 1.6
        ref_mu, ref_cov = precision_weighted_mean([[0.0], [3.0]], [[1.0], [4.0]])
        assert ref_mu[0] == pytest.approx(0.6, abs=1e-15) and ref_cov[0, 0] == pytest.approx(1.6, abs=1e-15)

    @given(arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)),
           arrays(np.float64, 3, elements=st.floats(1e-6, 1e4)), st.integers(1, 9))
    def test_identical_members_idempotent(self, m, v, E):
        mu, var = ci_fuse(diag_preds(np.tile(m, (E, 1)), np.tile(v, (E, 1))))
        np.testing.assert_array_equal(mu, m)
        np.testing.assert_array_equal(var, v)

    def test_single_member(self):
        f = fuse(diag_preds([[1.0, -2.0]], [[0.5, 3.0]]))
        np.testing.assert_array_equal(f.sigma_bar, [0.5, 3.0])
        np.testing.assert_array_equal(f.sigma_delta, [0.0, 0.0])

    @settings(max_examples=100)
    @given(means_st, st.data())
    def test_permutation_invariant_exactly(self, means, data):
        E, n = means.shape
        variances = data.draw(arrays(np.float64, (E, n), elements=st.floats(1e-4, 1e3)))
        perm = data.draw(st.permutations(range(E)))
        a, b = fuse(diag_preds(means, variances)), fuse(diag_preds(means[perm], variances[perm]))
        np.testing.assert_array_equal(a.mu_bar, b.mu_bar)
        np.testing.assert_array_equal(a.sigma_bar, b.sigma_bar)
        np.testing.assert_array_equal(a.sigma_delta, b.sigma_delta)

    @settings(max_examples=100)
    @given(means_st, st.data())
    def test_shift_equivariance(self, means, data):
        E, n = means.shape
        variances = data.draw(arrays(np.float64, (E, n), elements=st.floats(1e-4, 1e3)))
        v = data.draw(arrays(np.float64, n, elements=st.floats(-100, 100)))
        a, b = fuse(diag_preds(means, variances)), fuse(diag_preds(means + v, variances))
        scale = 1 + np.abs(means).max() + np.abs(v).max()
        np.testing.assert_allclose(b.mu_bar, a.mu_bar + v, rtol=0, atol=1e-12 * scale)
        np.testing.assert_array_equal(a.sigma_bar, b.sigma_bar)
        np.testing.assert_allclose(b.sigma_delta, a.sigma_delta, rtol=1e-9, atol=1e-12 * scale ** 2)

    @given(means_st, st.data())
    def test_precision_identity(self, means, data):
        E, n = means.shape
        variances = data.draw(arrays(np.float64, (E, n), elements=st.floats(1e-4, 1e3)))
        mu, var = ci_fuse_arrays(means, variances)
        np.testing.assert_allclose(1 / var, np.mean(1 / variances, axis=0), rtol=1e-12)
        np.testing.assert_allclose(mu / var, np.mean(means / variances, axis=0), rtol=1e-9,
                                   atol=1e-9 * np.abs(means / variances).max())

    @given(means_st)
    def test_equal_variances_give_arithmetic_mean_in_hull(self, means):
        mu, _ = ci_fuse_arrays(means, np.ones_like(means))
        assert np.all(mu >= means.min(0)) and np.all(mu <= means.max(0))
        np.testing.assert_allclose(mu, means.mean(0), rtol=1e-12, atol=1e-12 * (1 + np.abs(means).max()))

    def test_fusing_the_fused_is_identity(self, rng):
        f = fuse(diag_preds(rng.normal(size=(4, 3)), rng.uniform(0.1, 2, (4, 3))))
        g = fuse(diag_preds(np.tile(f.mu_bar, (6, 1)), np.tile(f.sigma_bar, (6, 1))))
        np.testing.assert_array_equal(g.mu_bar, f.mu_bar)
        np.testing.assert_array_equal(g.sigma_bar, f.sigma_bar)

    def test_dense_matches_oracle(self, rng):
        for _ in range(50):
            n, E = rng.integers(1, 5), rng.integers(1, 6)
            means = rng.normal(size=(E, n))
            covs = np.stack([random_spd(rng, n) for _ in range(E)])
            mu, cov = ci_fuse_arrays(means, covs, DENSE)
            ref_mu, ref_cov = precision_weighted_mean(means, covs)
            np.testing.assert_allclose(cov, ref_cov, rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(mu, ref_mu, rtol=1e-9, atol=1e-12)
            np.testing.assert_array_equal(cov, cov.T)

    def test_dense_and_diagonal_agree_on_diagonal_inputs(self, rng):
        means, variances = rng.normal(size=(4, 3)), rng.uniform(0.1, 3, (4, 3))
        mu_d, var_d = ci_fuse_arrays(means, variances, DIAGONAL)
        mu_f, cov_f = ci_fuse_arrays(means, np.stack([np.diag(v) for v in variances]), DENSE)
        np.testing.assert_allclose(mu_f, mu_d, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(np.diag(cov_f), var_d, rtol=1e-12)

    def test_ci_is_conservative_under_consistent_members(self, rng):
        true_var = np.array([0.3, 1.2])
        for _ in range(100):
            variances = true_var * rng.uniform(1.0, 5.0, (5, 2))
            _, var = ci_fuse_arrays(rng.normal(size=(5, 2)), variances)
            assert np.all(var - true_var >= 0)


class TestEpistemicVariance:
    def test_identical_members_zero(self):
        preds = diag_preds(np.tile([1.0, 2.0], (4, 1)), np.ones((4, 2)))
        np.testing.assert_array_equal(epistemic_variance(preds, [1.0, 2.0]), [0.0, 0.0])

    def test_hand_example(self):
        f = fuse(diag_preds([[0.0], [2.0]], [[1.0], [1.0]]))
        assert f.sigma_delta[0] == 1.0

    @given(means_st, st.floats(-20, 20))
    def test_scaling(self, means, c):
        a = fuse(diag_preds(means, np.ones_like(means)))
        b = fuse(diag_preds(c * means, np.ones_like(means)))
        np.testing.assert_allclose(b.sigma_delta, c ** 2 * a.sigma_delta, rtol=1e-9,
                                   atol=1e-9 * (1 + c ** 2) * (1 + np.abs(means).max()) ** 2)

    @given(means_st, arrays(np.float64, 4, elements=st.floats(-50, 50)))
    def test_matches_outer_product_oracle(self, means, center):
        c = center[: means.shape[1]]
        got = epistemic_variance_arrays(means, c, DENSE)
        ref = mean_outer_product(means, c)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12 * (1 + np.abs(means - c).max()) ** 2)
        assert np.all(np.linalg.eigvalsh(got) >= -1e-9 * (1 + np.abs(got).max()))

    def test_composition(self, rng):
        preds = diag_preds(rng.normal(size=(5, 2)), rng.uniform(0.5, 2, (5, 2)))
        f = fuse(preds)
        mu, var = ci_fuse(preds)
        np.testing.assert_array_equal(f.mu_bar, mu)
        np.testing.assert_array_equal(f.sigma_bar, var)
        np.testing.assert_array_equal(f.sigma_delta, epistemic_variance(preds, mu))


class TestKalmanFusionOracle:
    def test_independent_equal_members_factor_e(self):
        E, cov = 4, np.array([[2.0, 0.3], [0.3, 1.0]])
        means = np.random.default_rng(1).normal(size=(E, 2))
        joint = np.kron(np.eye(E), cov)
        k_mean, k_cov = oracle_kalman_fusion_dense(means, joint)
        ci_mean, ci_cov = ci_fuse_arrays(means, np.stack([cov] * E), DENSE)
        np.testing.assert_allclose(k_cov, cov / E, rtol=1e-12)
        np.testing.assert_allclose(ci_cov, E * k_cov, rtol=1e-12)
        np.testing.assert_allclose(k_mean, ci_mean, rtol=1e-12, atol=1e-14)

    def test_perfectly_correlated_members(self):
        cov = np.array([[1.5, 0.2], [0.2, 0.7]])
        m = np.array([0.4, -1.0])
        mean, fused = oracle_kalman_fusion_dense(np.stack([m] * 3), np.kron(np.ones((3, 3)), cov))
        np.testing.assert_allclose(fused, cov, rtol=1e-9)
        np.testing.assert_allclose(mean, m, rtol=1e-9)
        ci_mean, ci_cov = ci_fuse_arrays(np.stack([m] * 3), np.stack([cov] * 3), DENSE)
        np.testing.assert_allclose(ci_cov, fused, rtol=1e-9)

    def test_wrong_observation_matrix_detected(self):
        cov = np.eye(2)
        means = np.array([[1.0, 2.0], [3.0, 4.0]])
        joint = np.kron(np.eye(2), cov)
        right, _ = oracle_kalman_fusion_dense(means, joint)
        wrong_H = np.tile(np.array([[0.0, 1.0], [1.0, 0.0]]), (2, 1))
        wrong, _ = oracle_kalman_fusion_dense(means, joint, wrong_H)
        assert not np.allclose(right, wrong)

    def test_singular_information_rejected(self):
        with pytest.raises(SingularJointError):
            oracle_kalman_fusion_dense(np.zeros((2, 2)), np.eye(4), H=np.zeros((4, 2)))

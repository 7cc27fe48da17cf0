import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from infoprop.ensemble import EnsemblePredictions
from infoprop.fusion import FusedPrediction, fuse
from infoprop.gaussian import DENSE, DIAGONAL, VAR_FLOOR, DimensionMismatchError, QuantizationSpec, entropy_floor
from infoprop.kernel import NoiseDraws, condition, condition_arrays, draw_model_sample, marginal_tilde_sampler

Q1 = QuantizationSpec.uniform(1)
pos = st.floats(1e-6, 1e4)


def fused_1d(mu, sbar, sdelta):
    return FusedPrediction(np.array([mu]), np.array([sbar]), np.array([sdelta]), np.array([[mu]]), DIAGONAL)


def test_perfect_model_limit():
    f = fused_1d(0.5, 2.0, 0.0)
    step = condition(f, np.array([1.7]), Q1, np.array([0.3]))
    assert step.kalman_gain[0] == 1.0
    assert step.tilde_mean[0] == 1.7
    assert step.tilde_cov[0] == VAR_FLOOR
    assert step.entropy_per_dim[0] == pytest.approx(entropy_floor(Q1, 1)[0], abs=1e-12)


def test_hand_kalman_update():
    step = condition(fused_1d(0.0, 1.0, 1.0), np.array([2.0]), Q1, np.array([0.0]))
    assert step.kalman_gain[0] == 0.5
    assert step.tilde_mean[0] == 1.0
    assert step.tilde_cov[0] == 0.5
    expected = 0.5 * np.log2(2 * np.pi * np.e * 0.5) - np.log2(1e-6)
    assert step.entropy_per_dim[0] == pytest.approx(expected, abs=1e-12)
    assert step.propagated_state[0] == 1.0


@given(pos, pos, st.floats(-100, 100))
def test_zero_innovation(sbar, sdelta, mu):
    step = condition(fused_1d(mu, sbar, sdelta), np.array([mu]), Q1, np.zeros(1))
    assert step.tilde_mean[0] == mu


@given(arrays(np.float64, 3, elements=pos), arrays(np.float64, 3, elements=st.floats(0, 1e4)))
def test_gain_bounds_and_variance_reduction(sbar, sdelta):
    step = condition_arrays(np.zeros(3), sbar, sdelta, np.ones(3), np.full(3, 1e-6), np.zeros(3))
    assert np.all((step.kalman_gain >= 0) & (step.kalman_gain <= 1))
    assert np.all(step.tilde_cov <= np.maximum(sbar, VAR_FLOOR))
    strict = sdelta > 0
    assert np.all(step.tilde_cov[strict] < sbar[strict] + VAR_FLOOR)
    assert step.entropy_total == pytest.approx(step.entropy_per_dim.sum(), abs=1e-12)


def test_variance_equal_iff_no_epistemic_spread():
    step = condition_arrays(np.zeros(2), np.array([1.0, 1.0]), np.array([0.0, 0.5]), np.zeros(2),
                            np.full(2, 1e-6), np.zeros(2))
    assert step.tilde_cov[0] == VAR_FLOOR  # K = 1 collapses the belief onto the sample
    assert step.tilde_cov[1] == pytest.approx(1.0 / 3.0, rel=1e-15)


def test_innovation_form_matches_noise_decomposition(rng):
    # s_hat built as mu_bar + L_bar w + L_delta n gives mu_tilde = mu_bar + K (L_bar w + L_delta n)
    for mode in (DIAGONAL, DENSE):
        for _ in range(20):
            n = 3
            mu = rng.normal(size=n)
            if mode == DIAGONAL:
                sbar, sdelta = rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n)
                Lb, Ld = np.diag(np.sqrt(sbar)), np.diag(np.sqrt(sdelta))
            else:
                A, B = rng.normal(size=(n, n)), rng.normal(size=(n, n))
                sbar, sdelta = A @ A.T + 0.1 * np.eye(n), B @ B.T + 0.1 * np.eye(n)
                Lb, Ld = np.linalg.cholesky(sbar), np.linalg.cholesky(sdelta)
            draws = NoiseDraws.draw(rng, n)
            y = Lb @ draws.w + Ld @ draws.n
            step = condition_arrays(mu, sbar, sdelta, mu + y, np.full(n, 1e-6), draws.u, mode)
            K = np.diag(step.kalman_gain) if mode == DIAGONAL else step.kalman_gain
            np.testing.assert_allclose(step.tilde_mean, mu + K @ y, rtol=1e-12, atol=1e-12)


def test_dense_gain_and_covariance(rng):
    n = 3
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, n))
    sbar, sdelta = A @ A.T + 0.5 * np.eye(n), B @ B.T + 0.5 * np.eye(n)
    step = condition_arrays(np.zeros(n), sbar, sdelta, np.ones(n), np.full(n, 1e-3), np.zeros(n), DENSE)
    K = sbar @ np.linalg.inv(sbar + sdelta)
    np.testing.assert_allclose(step.kalman_gain, K, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(step.tilde_cov, (np.eye(n) - K) @ sbar, rtol=1e-10, atol=1e-12)
    sign, logdet = np.linalg.slogdet(step.tilde_cov)
    joint = 0.5 * (n * np.log2(2 * np.pi * np.e) + logdet / np.log(2)) - n * np.log2(1e-3)
    assert sign > 0 and step.entropy_total == pytest.approx(joint, abs=1e-10)
    assert np.all(np.diag(step.tilde_cov) <= np.diag(sbar))


def test_dense_equals_diagonal_on_diagonal_inputs():
    sbar, sdelta = np.array([1.0, 2.0]), np.array([0.5, 3.0])
    u, s_hat, dz = np.array([0.2, -0.4]), np.array([1.0, -1.0]), np.full(2, 1e-6)
    d = condition_arrays(np.zeros(2), sbar, sdelta, s_hat, dz, u, DIAGONAL)
    f = condition_arrays(np.zeros(2), np.diag(sbar), np.diag(sdelta), s_hat, dz, u, DENSE)
    np.testing.assert_allclose(np.diag(f.tilde_cov), d.tilde_cov, rtol=1e-12)
    np.testing.assert_allclose(f.tilde_mean, d.tilde_mean, rtol=1e-12)
    np.testing.assert_allclose(f.propagated_state, d.propagated_state, rtol=1e-12)
    assert f.entropy_total == pytest.approx(d.entropy_total, abs=1e-10)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        condition(fused_1d(0, 1, 1), np.zeros(2), Q1, np.zeros(1))


class TestDrawModelSample:
    preds = EnsemblePredictions.from_arrays(np.array([[0.0], [4.0]]), np.array([[1.0], [0.0]]))

    def test_noise_free_is_member_mean(self):
        f = fuse(self.preds)
        assert draw_model_sample(f, self.preds, 0, np.zeros(1))[0] == 0.0
        # zero member variance (up to the floor) ignores the noise
        assert draw_model_sample(f, self.preds, 1, np.array([2.0]))[0] == pytest.approx(4.0, abs=1e-5)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            draw_model_sample(fuse(self.preds), self.preds, 2, np.zeros(1))

    def test_mixture_mean(self):
        rng = np.random.default_rng(5)
        preds = EnsemblePredictions.from_arrays(np.array([[0.0], [1.0], [5.0]]), np.array([[1.0], [2.0], [0.5]]))
        f = fuse(preds)
        N = 100_000
        xs = np.array([draw_model_sample(f, preds, int(rng.integers(3)), rng.standard_normal(1))[0]
                       for _ in range(N)])
        mix_mean = 2.0
        mix_var = np.mean([1.0, 2.0, 0.5]) + np.var([0.0, 1.0, 5.0])
        assert abs(xs.mean() - mix_mean) <= 3 * np.sqrt(mix_var / N)


class TestMarginalSampler:
    def test_degenerate_returns_mean(self, rng):
        preds = EnsemblePredictions.from_arrays(np.full((3, 2), 1.5), np.zeros((3, 2)))
        xs = marginal_tilde_sampler(fuse(preds), preds, rng, size=100)
        np.testing.assert_allclose(xs, 1.5, atol=1e-4)

    def test_variance_is_fused_not_total(self):
        rng = np.random.default_rng(11)
        preds = EnsemblePredictions.from_arrays(np.array([[-2.0], [2.0]]), np.array([[1.0], [1.0]]))
        f = fuse(preds)  # sigma_bar = 1, sigma_delta = 4
        N = 100_000
        xs = marginal_tilde_sampler(f, preds, rng, size=N)[:, 0]
        se = f.sigma_bar[0] * np.sqrt(2.0 / (N - 1))
        assert abs(xs.var(ddof=1) - f.sigma_bar[0]) <= 3 * se
        assert abs(xs.var(ddof=1) - (f.sigma_bar[0] + f.sigma_delta[0])) > 100 * se

    def test_single_draw_shape(self, rng):
        preds = EnsemblePredictions.from_arrays(np.zeros((2, 3)), np.ones((2, 3)))
        assert marginal_tilde_sampler(fuse(preds), preds, rng).shape == (3,)

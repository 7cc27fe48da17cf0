import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from infoprop.buffer import TransitionBuffer
from infoprop.envs import (
    STDDEV,
    VARIANCE,
    GaussianPolicy,
    RandomWalkEnv,
    SyntheticEnv,
    env_rollout,
    env_rollouts,
    generate_dataset,
    linear_gaussian_env,
)
from infoprop.gaussian import wasserstein1_1d
from infoprop.seeding import derive_rng, derive_seed


class TestRandomWalk:
    def test_constants(self):
        env = RandomWalkEnv()
        assert env.noise_std == 0.01 and env.s0 == 0.0 and env.dim == 1
        assert env.step(np.array([1.0]), np.array([0.5]), np.array([2.0]))[0] == pytest.approx(1.52)

    def test_terminal_variance(self):
        env, policy = RandomWalkEnv(), GaussianPolicy(0.1)
        T, N = 20, 10_000
        finals = np.array([t.states()[-1, 0] for t in env_rollouts(env, policy, [np.zeros(1)] * N, T, seed=0)])
        var = T * (0.1 + 1e-4)
        assert abs(finals.var(ddof=1) - var) <= 3 * var * np.sqrt(2 / (N - 1))

    def test_increment_order_exchangeable(self):
        trajs = env_rollouts(RandomWalkEnv(), GaussianPolicy(0.1), [np.zeros(1)] * 4000, 15, seed=1)
        incs = np.stack([np.diff(t.states()[:, 0]) for t in trajs])
        rng = np.random.default_rng(0)
        a = np.array([rng.permutation(r).cumsum()[-1] for r in incs])
        b = np.array([rng.permutation(r)[::-1].cumsum()[-1] for r in incs])
        np.testing.assert_allclose(a, incs.sum(1), atol=1e-12)
        assert wasserstein1_1d(a, b) <= 1e-12
        assert wasserstein1_1d(np.cumsum(incs[:, ::-1], 1)[:, 7], np.cumsum(incs, 1)[:, 7]) <= 8 * np.sqrt(
            8 * 0.1001) / np.sqrt(4000)


def test_zero_noise_identity_env_constant():
    env = SyntheticEnv(lambda s, a: s, lambda s, a: np.zeros((1, 1)), 1)
    traj = env_rollout(env, lambda s, r: np.array([r.normal()]), np.array([2.0]), 10, np.random.default_rng(0))
    np.testing.assert_array_equal(traj.states(), 2.0)


def test_zero_horizon():
    traj = env_rollout(RandomWalkEnv(), GaussianPolicy(), np.zeros(1), 0, np.random.default_rng(0))
    assert len(traj) == 0
    np.testing.assert_array_equal(traj.states(), [[0.0]])


def test_env_terminal():
    env = SyntheticEnv(lambda s, a: s + 1, lambda s, a: np.zeros((1, 1)), 1, terminal_fn=lambda s: s[0] >= 3)
    traj = env_rollout(env, GaussianPolicy(), np.zeros(1), 10, np.random.default_rng(0))
    assert len(traj) == 3 and traj.termination == "env_terminal"


class TestPolicy:
    def test_interpretations(self):
        assert GaussianPolicy(0.1, interpretation=VARIANCE).std == pytest.approx(np.sqrt(0.1))
        assert GaussianPolicy(0.1, interpretation=STDDEV).std == 0.1
        with pytest.raises(ValueError):
            GaussianPolicy(0.1, interpretation="precision")

    @pytest.mark.parametrize("interp,var", [(VARIANCE, 0.1), (STDDEV, 0.01)])
    def test_empirical_variance(self, interp, var):
        rng = np.random.default_rng(0)
        p = GaussianPolicy(0.1, interpretation=interp)
        xs = np.array([p(None, rng)[0] for _ in range(20_000)])
        assert abs(xs.var() - var) <= 4 * var * np.sqrt(2 / 20_000)


class TestDataset:
    def test_size_and_determinism(self):
        env, pol = RandomWalkEnv(), GaussianPolicy()
        a = generate_dataset(env, pol, n_rollouts=20, T=30, seed=5)
        b = generate_dataset(env, pol, n_rollouts=20, T=30, seed=5)
        assert len(a) == 600
        assert a.csv_text() == b.csv_text()
        assert generate_dataset(env, pol, n_rollouts=20, T=30, seed=6).csv_text() != a.csv_text()

    def test_increment_mean_zero(self):
        buf = generate_dataset(RandomWalkEnv(), GaussianPolicy(), n_rollouts=200, T=50, seed=2)
        inc = (buf.next_states - buf.states)[:, 0]
        assert abs(inc.mean()) <= 3 * np.sqrt(0.1001 / inc.size)

    def test_shared_action_streams(self):
        # environment data and model rollouts with one seed see the same actions
        trajs = env_rollouts(RandomWalkEnv(), GaussianPolicy(), [np.zeros(1)] * 2, 3, seed=4)
        rng = derive_rng(4, "policy", 1)
        expected = [GaussianPolicy()(None, rng)[0] for _ in range(3)]
        np.testing.assert_array_equal(trajs[1].actions()[:, 0], expected)


def test_linear_gaussian_env():
    A = np.array([[1.0, 0.1], [0.0, 0.9]])
    B = np.array([[0.0], [1.0]])
    L = np.array([[0.1, 0.0], [0.05, 0.2]])
    env = linear_gaussian_env(A, B, L)
    s, a, w = np.array([1.0, -1.0]), np.array([0.5]), np.array([0.3, -0.2])
    np.testing.assert_allclose(env.step(s, a, w), A @ s + B @ a + L @ w)
    assert env.dim == 2 and env.action_dim == 1


class TestBuffer:
    def test_append_and_index(self):
        buf = TransitionBuffer(2, 1)
        buf.append([1.0, 2.0], [0.5], [1.5, 2.5])
        s, a, s2 = buf[0]
        np.testing.assert_array_equal(s, [1.0, 2.0])
        assert len(buf) == 1 and buf.states.shape == (1, 2)

    def test_dimension_checks(self):
        with pytest.raises(ValueError):
            TransitionBuffer(2, 1).append([1.0], [0.5], [1.5, 2.5])

    def test_capacity_drops_oldest(self):
        buf = TransitionBuffer(1, 1, capacity=3)
        for i in range(5):
            buf.append([float(i)], [0.0], [float(i)])
        np.testing.assert_array_equal(buf.states[:, 0], [2.0, 3.0, 4.0])

    @given(st.lists(st.floats(-1e6, 1e6, allow_subnormal=False), min_size=3, max_size=30))
    def test_csv_round_trip_exact(self, values):
        n = len(values) // 3
        arr = np.array(values[: 3 * n]).reshape(n, 3)
        buf = TransitionBuffer.from_arrays(arr[:, :1], arr[:, 1:2], arr[:, 2:])
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as d:
            path = Path(d) / "b.csv"
            buf.to_csv(path)
            back = TransitionBuffer.from_csv(path)
        for x, y in zip(buf.arrays(), back.arrays()):
            np.testing.assert_array_equal(x, y)
        assert buf.columns() == ["s0", "a0", "next_s0"]


def test_seed_streams_are_labelled_and_stable():
    a = derive_rng(0, "rollout", 3).standard_normal(4)
    np.testing.assert_array_equal(a, derive_rng(0, "rollout", 3).standard_normal(4))
    assert not np.array_equal(a, derive_rng(0, "rollout", 4).standard_normal(4))
    assert not np.array_equal(a, derive_rng(1, "rollout", 3).standard_normal(4))
    assert derive_seed(0, "train") == derive_seed(0, "train") != derive_seed(0, "calibrate")

import numpy as np
import pytest

# PASS/FAIL lines from the acceptance suite, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []

from infoprop.ensemble import EnsembleConfig, train
from infoprop.envs import GaussianPolicy, RandomWalkEnv, generate_dataset


@pytest.fixture(scope="session")
def walk_env():
    return RandomWalkEnv()


@pytest.fixture(scope="session")
def walk_policy():
    return GaussianPolicy(0.1)


@pytest.fixture(scope="session")
def small_walk_buffer(walk_env, walk_policy):
    return generate_dataset(walk_env, walk_policy, n_rollouts=100, T=50, seed=3)


@pytest.fixture(scope="session")
def small_walk_model(small_walk_buffer):
    return train(small_walk_buffer, EnsembleConfig(epochs=20, batch_size=64, hidden_neurons=8, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

"""Synthetic ground-truth environments with known dynamics.

Transitions follow s' = mean_fn(s, a) + L(s, a) w with w ~ N(0, I).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .buffer import TransitionBuffer
from .rollout import ENV, ENV_TERMINAL, MAX_LENGTH, Step, Trajectory
from .seeding import derive_rng

VARIANCE = "variance"
STDDEV = "stddev"


@dataclass
class SyntheticEnv:
    mean_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_chol_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    action_dim: int = 1
    terminal_fn: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "synthetic"

    def step(self, state, action, w) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        action = np.asarray(action, dtype=float)
        L = np.atleast_2d(self.noise_chol_fn(state, action))
        return np.asarray(self.mean_fn(state, action), dtype=float) + L @ np.asarray(w, dtype=float)

    def is_terminal(self, state) -> bool:
        return bool(self.terminal_fn(state)) if self.terminal_fn is not None else False

    def spec(self) -> dict:
        return {"name": self.name, "dim": self.dim, "action_dim": self.action_dim}


@dataclass
class GaussianPolicy:
    """Zero-mean Gaussian random policy, independent of the state.

    ``scale`` is read as a variance or a standard deviation depending on ``interpretation``.
    """

    scale: float = 0.1
    action_dim: int = 1
    interpretation: str = VARIANCE

    def __post_init__(self):
        if self.interpretation not in (VARIANCE, STDDEV):
            raise ValueError(f"interpretation must be {VARIANCE!r} or {STDDEV!r}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.scale)) if self.interpretation == VARIANCE else float(self.scale)

    @property
    def variance(self) -> float:
        return self.std ** 2

    def __call__(self, state, rng: np.random.Generator) -> np.ndarray:
        return self.std * rng.standard_normal(self.action_dim)


@dataclass
class RandomWalkEnv(SyntheticEnv):
    """1-D random walk: s' = s + a + noise_std * w, started at s0."""

    noise_std: float = 0.01
    s0: float = 0.0
    mean_fn: Callable = field(init=False)
    noise_chol_fn: Callable = field(init=False)
    dim: int = field(init=False, default=1)
    name: str = "random_walk"

    def __post_init__(self):
        self.mean_fn = lambda s, a: s + a
        self.noise_chol_fn = lambda s, a: np.array([[self.noise_std]])
        self.dim = 1
        self.action_dim = 1

    def step_variance(self, action_variance: float) -> float:
        return action_variance + self.noise_std ** 2

    def spec(self) -> dict:
        return {**super().spec(), "noise_std": self.noise_std, "s0": self.s0}


def linear_gaussian_env(A, B, L, name: str = "linear_gaussian") -> SyntheticEnv:
    """s' = A s + B a + L w with constant matrices (multi-dimensional extension)."""
    A, B, L = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, B, L))
    env = SyntheticEnv(
        mean_fn=lambda s, a: A @ s + B @ a,
        noise_chol_fn=lambda s, a: L,
        dim=A.shape[0],
        action_dim=B.shape[1],
        name=name,
    )
    env.matrices = {"A": A, "B": B, "L": L}
    return env


def env_rollout(env: SyntheticEnv, policy, s0, T: int, rng: np.random.Generator,
                policy_rng: np.random.Generator | None = None):
    """Iterate the true dynamics for up to T steps; returns a Trajectory without entropy data.

    Process noise comes from ``rng``, actions from ``policy_rng`` (defaults to ``rng``).
    """
    policy_rng = rng if policy_rng is None else policy_rng
    s = np.atleast_1d(np.asarray(s0, dtype=float))
    steps = []
    termination = MAX_LENGTH
    for _ in range(T):
        if env.is_terminal(s):
            termination = ENV_TERMINAL
            break
        a = np.atleast_1d(policy(s, policy_rng))
        w = rng.standard_normal(env.dim)
        s_next = env.step(s, a, w)
        steps.append(Step(state=s, action=a, next_state=s_next))
        s = s_next
    return Trajectory(start_state=np.atleast_1d(np.asarray(s0, dtype=float)), steps=steps,
                      termination=termination, mechanism=ENV)


def generate_dataset(env: SyntheticEnv, policy, n_rollouts: int = 1000, T: int = 100,
                     seed: int = 0, s0=None) -> TransitionBuffer:
    """Flattened transitions of ``n_rollouts`` environment rollouts.

    Rollout i uses streams (seed, "env", i) for process noise and (seed, "policy", i) for actions.
    """
    if s0 is None:
        s0 = np.full(env.dim, getattr(env, "s0", 0.0))
    trajs = []
    for i in range(n_rollouts):
        trajs.append(env_rollout(env, policy, s0, T, derive_rng(seed, "env", i), derive_rng(seed, "policy", i)))
    return trajectories_to_buffer(trajs, env.dim, env.action_dim)


def env_rollouts(env: SyntheticEnv, policy, starts, T: int, seed: int = 0):
    """One environment rollout per start with the same stream layout as generate_dataset."""
    return [
        env_rollout(env, policy, s0, T, derive_rng(seed, "env", i), derive_rng(seed, "policy", i))
        for i, s0 in enumerate(starts)
    ]


def trajectories_to_buffer(trajs, state_dim: int, action_dim: int) -> TransitionBuffer:
    buf = TransitionBuffer(state_dim, action_dim)
    for traj in trajs:
        for step in traj.steps:
            buf.append(step.state, step.action, step.next_state)
    return buf

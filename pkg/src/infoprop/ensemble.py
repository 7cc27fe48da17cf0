"""Probabilistic ensemble of Gaussian-output MLPs (aleatoric/epistemic separating model).

Each member maps normalized (state, action) to the mean and log-variance of the
normalized state delta. Members share architecture and data and differ only in
initialization and minibatch order.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .buffer import EmptyBufferError, TransitionBuffer
from .gaussian import DIAGONAL, VAR_FLOOR, DimensionMismatchError, GaussianBelief
from .seeding import derive_rng

CHECKPOINT_FORMAT = "infoprop-ensemble"
CHECKPOINT_VERSION = 1


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# activation -> (f(z), f'(z))
ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "softplus": (_softplus, _sigmoid),
    "silu": (lambda z: z * _sigmoid(z), lambda z: _sigmoid(z) * (1.0 + z * (1.0 - _sigmoid(z)))),
}


class NonFiniteLossError(RuntimeError):
    pass


class CheckpointVersionError(ValueError):
    pass


@dataclass
class EnsembleConfig:
    """Training hyperparameters; defaults follow the random-walk toy setup."""

    ensemble_size: int = 5
    hidden_neurons: int = 2
    hidden_layers: int = 1
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 4
    seed: int = 0
    batch_size: int = 256
    optimizer: str = "adam"
    activation: str = "tanh"
    var_max: float = 1e6

    def __post_init__(self):
        for name in ("ensemble_size", "hidden_neurons", "hidden_layers", "epochs", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True, eq=False)
class EnsemblePredictions:
    """Per-member predictive Gaussians at one (state, action)."""

    members: tuple[GaussianBelief, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("at least one member prediction is required")
        dims = {m.dim for m in members}
        if len(dims) != 1:
            raise DimensionMismatchError(f"members disagree on state dimension: {sorted(dims)}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_arrays(cls, means, variances, mode: str = DIAGONAL) -> "EnsemblePredictions":
        return cls(tuple(GaussianBelief(m, v, mode) for m, v in zip(means, variances)))

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, e: int) -> GaussianBelief:
        return self.members[e]

    @property
    def dim(self) -> int:
        return self.members[0].dim

    @property
    def mode(self) -> str:
        return self.members[0].mode

    @property
    def means(self) -> np.ndarray:
        return np.stack([m.mean for m in self.members])

    @property
    def covs(self) -> np.ndarray:
        return np.stack([m.cov for m in self.members])


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std < 1e-12, 1.0, std))

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, z):
        return z * self.std + self.mean


class _MemberDynamics:
    """Batched-prediction interface shared by trained and synthetic ensembles."""

    ensemble_size: int
    state_dim: int
    action_dim: int

    def predict_batch(self, states, actions) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def predict(self, state, action) -> EnsemblePredictions:
        state = np.asarray(state, dtype=float).reshape(-1)
        action = np.asarray(action, dtype=float).reshape(-1)
        if state.shape[0] != self.state_dim or action.shape[0] != self.action_dim:
            raise DimensionMismatchError(
                f"expected state dim {self.state_dim} and action dim {self.action_dim}, "
                f"got {state.shape[0]} and {action.shape[0]}"
            )
        means, variances = self.predict_batch(state[None], action[None])
        return EnsemblePredictions.from_arrays(means[:, 0], variances[:, 0])


class EnsembleModel(_MemberDynamics):
    """Trained probabilistic ensemble.

    ``weights`` is a list over layers of (W, b) with member-stacked shapes
    W: (E, fan_in, fan_out), b: (E, fan_out).
    """

    def __init__(self, config: EnsembleConfig, state_dim: int, action_dim: int,
                 weights, input_norm: Normalizer, target_norm: Normalizer):
        self.config = config
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.weights = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for W, b in weights]
        self.input_norm = input_norm
        self.target_norm = target_norm
        self.ensemble_size = self.weights[0][0].shape[0]
        self.loss_curve: list[float] = []

    @property
    def logvar_bounds(self) -> tuple[float, float]:
        return np.log(VAR_FLOOR), np.log(self.config.var_max)

    def forward_normalized(self, x):
        """Member outputs (mean, clamped logvar) in normalized units; x is (B, in) or (E, B, in)."""
        act = ACTIVATIONS[self.config.activation][0]
        h = x
        for W, b in self.weights[:-1]:
            h = act(h @ W + b[:, None, :])
        W, b = self.weights[-1]
        out = h @ W + b[:, None, :]
        n = self.state_dim
        lo, hi = self.logvar_bounds
        return out[..., :n], np.clip(out[..., n:], lo, hi)

    def predict_batch(self, states, actions):
        """Member means and variances in state units, each of shape (E, B, n)."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        x = self.input_norm.normalize(np.concatenate([states, actions], axis=-1))
        mean_z, logvar_z = self.forward_normalized(x)
        delta = self.target_norm.denormalize(mean_z)
        var = np.maximum(np.exp(logvar_z) * self.target_norm.std ** 2, VAR_FLOOR)
        return states[None] + delta, var

    def member_subset(self, indices) -> "EnsembleModel":
        idx = list(indices)
        weights = [(W[idx], b[idx]) for W, b in self.weights]
        cfg = EnsembleConfig(**{**asdict(self.config), "ensemble_size": len(idx)})
        return EnsembleModel(cfg, self.state_dim, self.action_dim, weights, self.input_norm, self.target_norm)

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "normalizers": {
                "input_mean": self.input_norm.mean.tolist(),
                "input_std": self.input_norm.std.tolist(),
                "target_mean": self.target_norm.mean.tolist(),
                "target_std": self.target_norm.std.tolist(),
            },
            "layers": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointVersionError(f"not an ensemble checkpoint (format={d.get('format')!r})")
        if d.get("version") != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint version {d.get('version')!r} != supported {CHECKPOINT_VERSION}"
            )
        norms = d["normalizers"]
        return cls(
            EnsembleConfig(**d["config"]),
            d["state_dim"],
            d["action_dim"],
            [(np.array(layer["W"]), np.array(layer["b"])) for layer in d["layers"]],
            Normalizer(np.array(norms["input_mean"]), np.array(norms["input_std"])),
            Normalizer(np.array(norms["target_mean"]), np.array(norms["target_std"])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SyntheticEnsemble(_MemberDynamics):
    """Ensemble with hand-specified member dynamics, for oracles and tests.

    ``mean_fns[e](states, actions)`` and ``var_fns[e](states, actions)`` map
    (B, n) and (B, m) arrays to (B, n) arrays.
    """

    mean_fns: list
    var_fns: list
    state_dim: int
    action_dim: int = 1
    ensemble_size: int = field(init=False)

    def __post_init__(self):
        if len(self.mean_fns) != len(self.var_fns) or not self.mean_fns:
            raise ValueError("need matching, non-empty mean_fns and var_fns")
        self.ensemble_size = len(self.mean_fns)

    @classmethod
    def constant_offsets(cls, offsets, variances, state_dim=None, action_dim=1, action_gain=1.0):
        """Members predict s + action_gain * a + offsets[e] with fixed variances[e] (additive-action dynamics)."""
        offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
        variances = np.broadcast_to(np.asarray(variances, dtype=float), offsets.shape)
        n = offsets.shape[1] if state_dim is None else state_dim

        def mean_fn(o):
            def f(s, a):
                drive = action_gain * a[:, :n] if a.shape[1] >= n else action_gain * a[:, :1]
                return s + drive + o
            return f

        def var_fn(v):
            return lambda s, a: np.broadcast_to(v, s.shape).copy()

        return cls([mean_fn(o) for o in offsets], [var_fn(v) for v in variances], n, action_dim)

    def predict_batch(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        means = np.stack([f(states, actions) for f in self.mean_fns])
        variances = np.stack([np.maximum(f(states, actions), VAR_FLOOR) for f in self.var_fns])
        return means, variances


def sample_member(model, rng: np.random.Generator) -> int:
    """Uniform member index in {0, ..., E-1}."""
    return int(rng.integers(model.ensemble_size))


def _init_weights(config: EnsembleConfig, n_in: int, n_out: int) -> list[tuple[np.ndarray, np.ndarray]]:
    sizes = [n_in] + [config.hidden_neurons] * config.hidden_layers + [2 * n_out]
    per_member = []
    for e in range(config.ensemble_size):
        rng = derive_rng(config.seed, "member-init", e)
        per_member.append([
            (rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in), np.zeros(fan_out))
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:])
        ])
    return [
        (np.stack([m[i][0] for m in per_member]), np.stack([m[i][1] for m in per_member]))
        for i in range(len(sizes) - 1)
    ]


def gaussian_nll_and_grads(weights, x, y, logvar_bounds, activation="tanh"):
    """Per-member mean Gaussian NLL (constant dropped) and its gradients.

    x: (E, B, in), y: (E, B, n). Returns (loss per member (E,), grads list like weights).
    """
    act, act_grad = ACTIVATIONS[activation]
    acts, pre = [x], []
    h = x
    for W, b in weights[:-1]:
        z = h @ W + b[:, None, :]
        h = act(z)
        pre.append(z)
        acts.append(h)
    W, b = weights[-1]
    out = h @ W + b[:, None, :]
    n = y.shape[-1]
    mean, raw_lv = out[..., :n], out[..., n:]
    lo, hi = logvar_bounds
    lv = np.clip(raw_lv, lo, hi)
    inv_var = np.exp(-lv)
    err = mean - y
    count = y.shape[1] * n
    loss = 0.5 * np.sum(err ** 2 * inv_var + lv, axis=(1, 2)) / count

    d_mean = err * inv_var / count
    d_lv = 0.5 * (1.0 - err ** 2 * inv_var) / count
    d_lv = d_lv * ((raw_lv > lo) & (raw_lv < hi))
    delta = np.concatenate([d_mean, d_lv], axis=-1)

    grads = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        W, _ = weights[i]
        grads[i] = (np.swapaxes(acts[i], 1, 2) @ delta, delta.sum(axis=1))
        if i > 0:
            delta = (delta @ np.swapaxes(W, 1, 2)) * act_grad(pre[i - 1])
    return loss, grads


def train(dataset: TransitionBuffer, config: EnsembleConfig | None = None, rng_seed: int | None = None) -> EnsembleModel:
    """Fit every member by minibatch gradient descent on the Gaussian NLL of state deltas.

    Deterministic given (dataset, config, seed).
    """
    config = config or EnsembleConfig()
    if rng_seed is not None:
        config = EnsembleConfig(**{**asdict(config), "seed": int(rng_seed)})
    if len(dataset) == 0:
        raise EmptyBufferError("cannot train on an empty dataset")

    states, actions, next_states = dataset.arrays()
    inputs = np.concatenate([states, actions], axis=1)
    targets = next_states - states
    input_norm = Normalizer.fit(inputs)
    target_norm = Normalizer.fit(targets)
    x_all = input_norm.normalize(inputs)
    y_all = target_norm.normalize(targets)

    n_data = x_all.shape[0]
    E = config.ensemble_size
    weights = _init_weights(config, x_all.shape[1], y_all.shape[1])
    model = EnsembleModel(config, states.shape[1], actions.shape[1], weights, input_norm, target_norm)
    bounds = model.logvar_bounds

    shuffle_rngs = [derive_rng(config.seed, "member-shuffle", e) for e in range(E)]
    m_state = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    v_state = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr, wd = config.learning_rate, config.weight_decay
    step = 0

    def full_loss():
        xb = np.broadcast_to(x_all, (E,) + x_all.shape)
        yb = np.broadcast_to(y_all, (E,) + y_all.shape)
        loss, _ = gaussian_nll_and_grads(weights, xb, yb, bounds, config.activation)
        return float(loss.mean())

    loss_curve = [full_loss()]
    bs = min(config.batch_size, n_data)
    for _ in range(config.epochs):
        perms = np.stack([r.permutation(n_data) for r in shuffle_rngs])
        for start in range(0, n_data, bs):
            idx = perms[:, start:start + bs]
            loss, grads = gaussian_nll_and_grads(weights, x_all[idx], y_all[idx], bounds, config.activation)
            if not np.all(np.isfinite(loss)):
                raise NonFiniteLossError(f"non-finite training loss {loss} at step {step}")
            step += 1
            for i, ((W, b), (gW, gb)) in enumerate(zip(weights, grads)):
                if config.optimizer == "adam":
                    mW, mb = m_state[i]
                    vW, vb = v_state[i]
                    mW = beta1 * mW + (1 - beta1) * gW
                    mb = beta1 * mb + (1 - beta1) * gb
                    vW = beta2 * vW + (1 - beta2) * gW ** 2
                    vb = beta2 * vb + (1 - beta2) * gb ** 2
                    m_state[i], v_state[i] = (mW, mb), (vW, vb)
                    c1, c2 = 1 - beta1 ** step, 1 - beta2 ** step
                    W = W - lr * (mW / c1) / (np.sqrt(vW / c2) + eps) - lr * wd * W
                    b = b - lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
                else:
                    W = W - lr * gW - lr * wd * W
                    b = b - lr * gb
                weights[i] = (W, b)
        loss_curve.append(full_loss())
        if not np.isfinite(loss_curve[-1]):
            raise NonFiniteLossError(f"non-finite epoch loss {loss_curve[-1]}")

    model.weights = weights
    model.loss_curve = loss_curve
    return model

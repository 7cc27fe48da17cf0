"""Data-driven entropy thresholds from single-step predictions on real transitions."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .buffer import EmptyBufferError, TransitionBuffer
from .fusion import dense_from_diagonal, fuse_arrays
from .gaussian import DIAGONAL, QuantizationSpec, entropy_floor
from .kernel import condition_arrays, member_samples
from .rollout import THRESHOLD_MARGIN_BITS, Thresholds
from .seeding import derive_rng

ZETA1 = 0.99
ZETA2 = 0.01
XI = 100.0
THRESHOLDS_FORMAT = "infoprop-thresholds"


class EmptySetError(ValueError):
    pass


class HashMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EntropySets:
    """Per-dimension single-step Infoprop entropies, shape (|buffer|, n)."""

    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def for_dim(self, k: int) -> np.ndarray:
        return self.values[:, k]


def entropy_sets(model, buffer: TransitionBuffer, q: QuantizationSpec | None = None, seed: int = 0,
                 mode: str = DIAGONAL, subsample: int | None = None, chunk: int = 65536) -> EntropySets:
    """Single-step Infoprop entropies at every stored (state, action).

    One model sample is drawn per transition (stream (seed, "calibration")), although
    the entropy depends only on the conditioned covariance. The stored next state is unused.
    """
    if len(buffer) == 0:
        raise EmptyBufferError("cannot calibrate on an empty buffer")
    states, actions, _ = buffer.arrays()
    rng = derive_rng(seed, "calibration")
    if subsample is not None and subsample < len(buffer):
        pick = np.sort(rng.choice(len(buffer), size=subsample, replace=False))
        states, actions = states[pick], actions[pick]
    n = states.shape[1]
    dz = (q or QuantizationSpec.uniform(n)).for_dim(n)
    out = []
    for start in range(0, states.shape[0], chunk):
        s, a = states[start:start + chunk], actions[start:start + chunk]
        means, variances = model.predict_batch(s, a)
        covs = variances if mode == DIAGONAL else dense_from_diagonal(variances)
        members = rng.integers(model.ensemble_size, size=s.shape[0])
        w = rng.standard_normal(s.shape)
        u = rng.standard_normal(s.shape)
        s_hat = member_samples(means, covs, members, w, mode)
        fused = fuse_arrays(means, covs, mode)
        step = condition_arrays(fused.mu_bar, fused.sigma_bar, fused.sigma_delta, s_hat, dz, u, mode)
        out.append(step.entropy_per_dim)
    return EntropySets(np.concatenate(out, axis=0))


def quantile(values, zeta: float) -> float:
    """Smallest h in the set with empirical CDF F(h) >= zeta; no interpolation."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise EmptySetError("quantile of an empty set")
    if not 0.0 < zeta <= 1.0:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
    N = x.size
    # F at the i-th order statistic is at least i/N; the first i with i/N >= zeta selects it
    cdf_steps = np.arange(1, N + 1) / N
    i = int(np.searchsorted(cdf_steps, zeta, side="left"))
    return float(x[min(i, N - 1)])


def thresholds_from_sets(sets: EntropySets, zeta1: float = ZETA1, zeta2: float = ZETA2, xi: float = XI,
                         q: QuantizationSpec | None = None, clamp: bool = True) -> Thresholds:
    """lambda1 = zeta1-quantile, lambda2 = xi * zeta2-quantile, per dimension.

    With ``clamp`` both are lifted to at least the entropy floor plus one bit, so
    that negative or floor-level entropies never terminate every rollout at once.
    """
    n = sets.dim
    l1 = np.array([quantile(sets.for_dim(k), zeta1) for k in range(n)])
    l2 = np.array([xi * quantile(sets.for_dim(k), zeta2) for k in range(n)])
    if clamp:
        minimum = entropy_floor(q or QuantizationSpec.uniform(n), n) + THRESHOLD_MARGIN_BITS
        l1 = np.maximum(l1, minimum)
        l2 = np.maximum(l2, minimum)
    return Thresholds(l1, l2)


def thresholds(model, buffer: TransitionBuffer, zeta1: float = ZETA1, zeta2: float = ZETA2, xi: float = XI,
               q: QuantizationSpec | None = None, seed: int = 0, mode: str = DIAGONAL,
               subsample: int | None = None) -> Thresholds:
    sets = entropy_sets(model, buffer, q, seed=seed, mode=mode, subsample=subsample)
    return thresholds_from_sets(sets, zeta1, zeta2, xi, q)


def thresholds_to_dict(th: Thresholds, model_hash: str, **extra) -> dict:
    return {
        "format": THRESHOLDS_FORMAT,
        "model_hash": model_hash,
        "lambda1": th.lambda1.tolist(),
        "lambda2": th.lambda2.tolist(),
        **extra,
    }


def save_thresholds(path, th: Thresholds, model_hash: str, **extra) -> None:
    Path(path).write_text(json.dumps(thresholds_to_dict(th, model_hash, **extra), sort_keys=True, indent=1))


def load_thresholds(path, expected_model_hash: str | None = None) -> Thresholds:
    """Load thresholds; refuses files calibrated against a different model checkpoint."""
    d = json.loads(Path(path).read_text())
    if d.get("format") != THRESHOLDS_FORMAT:
        raise ValueError(f"{path} is not a thresholds file")
    if expected_model_hash is not None and d["model_hash"] != expected_model_hash:
        raise HashMismatchError(
            f"thresholds were calibrated for model {d['model_hash'][:12]}, "
            f"not {expected_model_hash[:12]}"
        )
    return Thresholds(np.array(d["lambda1"]), np.array(d["lambda2"]))

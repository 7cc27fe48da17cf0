"""Infoprop transition: condition the fused estimate on a model sample.

The fused estimate S-bar ~ N(mu_bar, sigma_bar) is treated as the signal and a
model sample s_hat as a noisy observation of it, with the epistemic variance
sigma_delta as observation noise. The standard Kalman update gives

    K = sigma_bar (sigma_bar + sigma_delta)^-1
    tilde_mean = mu_bar + K (s_hat - mu_bar)
    tilde_cov = (I - K) sigma_bar

and the propagated state is a draw tilde_mean + L_tilde u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsemblePredictions
from .fusion import FusedPrediction
from .gaussian import (
    DIAGONAL,
    LOG2_2PIE,
    VAR_FLOOR,
    DimensionMismatchError,
    QuantizationSpec,
    entropy_bits_per_dim,
    floor_eigenvalues,
    floor_variances,
)


@dataclass(frozen=True, eq=False)
class NoiseDraws:
    """Standard-normal draws: w (aleatoric), n (epistemic), u (conditional)."""

    w: np.ndarray
    n: np.ndarray
    u: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, dim: int) -> "NoiseDraws":
        return cls(rng.standard_normal(dim), rng.standard_normal(dim), rng.standard_normal(dim))


@dataclass(frozen=True, eq=False)
class InfopropStep:
    model_sample: np.ndarray
    kalman_gain: np.ndarray
    tilde_mean: np.ndarray
    tilde_cov: np.ndarray
    entropy_per_dim: np.ndarray
    entropy_total: np.ndarray
    propagated_state: np.ndarray
    mode: str = DIAGONAL


def condition_arrays(mu_bar, sigma_bar, sigma_delta, model_sample, delta_z, u,
                     mode: str = DIAGONAL, gain_scale: float = 1.0) -> InfopropStep:
    """Batched Kalman conditioning; leading axes broadcast.

    ``gain_scale`` exists only to build deliberately broken conditioners for
    oracle power checks; leave it at 1.
    """
    mu_bar = np.asarray(mu_bar, dtype=float)
    s_hat = np.asarray(model_sample, dtype=float)
    u = np.asarray(u, dtype=float)
    if s_hat.shape[-1] != mu_bar.shape[-1]:
        raise DimensionMismatchError(f"model sample dim {s_hat.shape[-1]} != fused dim {mu_bar.shape[-1]}")
    sigma_bar = floor_variances(sigma_bar, mode)
    sigma_delta = np.asarray(sigma_delta, dtype=float)

    if mode == DIAGONAL:
        total = sigma_bar + sigma_delta
        gain = gain_scale * (sigma_bar / total)
        tilde_mean = mu_bar + gain * (s_hat - mu_bar)
        if gain_scale == 1.0:
            # product form avoids cancellation in (1 - K) when sigma_delta << sigma_bar
            tilde_var = sigma_bar * sigma_delta / total
        else:
            tilde_var = (1.0 - gain) * sigma_bar
        tilde_var = floor_variances(tilde_var)
        per_dim = entropy_bits_per_dim(tilde_var, delta_z)
        propagated = tilde_mean + np.sqrt(tilde_var) * u
        return InfopropStep(s_hat, gain, tilde_mean, tilde_var, per_dim, per_dim.sum(axis=-1),
                            propagated, mode)

    n = mu_bar.shape[-1]
    eye = np.eye(n)
    total = sigma_bar + sigma_delta
    total = 0.5 * (total + np.swapaxes(total, -1, -2))
    # K = sigma_bar total^-1  <=>  total^T K^T = sigma_bar^T, both symmetric
    gain = gain_scale * np.swapaxes(np.linalg.solve(total, sigma_bar), -1, -2)
    tilde_mean = mu_bar + (gain @ (s_hat - mu_bar)[..., None])[..., 0]
    tilde_cov = (eye - gain) @ sigma_bar
    # rank-deficient epistemic spread can leave directions with zero conditional variance
    tilde_cov = floor_eigenvalues(tilde_cov)
    chol = np.linalg.cholesky(tilde_cov)
    per_dim = entropy_bits_per_dim(np.diagonal(tilde_cov, axis1=-2, axis2=-1), delta_z)
    _, logdet = np.linalg.slogdet(tilde_cov)
    joint = 0.5 * (n * LOG2_2PIE + logdet / np.log(2.0)) - np.log2(np.broadcast_to(delta_z, (n,))).sum()
    propagated = tilde_mean + (chol @ u[..., None])[..., 0]
    return InfopropStep(s_hat, gain, tilde_mean, tilde_cov, per_dim, joint, propagated, mode)


def condition(fused: FusedPrediction, model_sample, q: QuantizationSpec, u) -> InfopropStep:
    """Condition the fused estimate on one model sample and draw the propagated state with noise ``u``."""
    return condition_arrays(fused.mu_bar, fused.sigma_bar, fused.sigma_delta, model_sample,
                            q.for_dim(fused.dim), u, fused.mode)


def draw_model_sample(fused: FusedPrediction, preds: EnsemblePredictions, member: int, w) -> np.ndarray:
    """Trajectory-sampling draw from one member: mu_e + L_e w."""
    if not 0 <= member < len(preds):
        raise IndexError(f"member index {member} out of range for ensemble of size {len(preds)}")
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != fused.dim:
        raise DimensionMismatchError(f"noise dim {w.shape[-1]} != state dim {fused.dim}")
    m = preds[member]
    if m.mode == DIAGONAL:
        return m.mean + np.sqrt(m.cov) * w
    return m.mean + m.chol @ w


def member_samples(means, covs, members, w, mode: str = DIAGONAL) -> np.ndarray:
    """Vectorized member-level draws.

    means/covs are member-stacked (E, B, n[, n]); members (B,) picks one member per row.
    """
    rows = np.arange(means.shape[1])
    mu = means[members, rows]
    cov = covs[members, rows]
    if mode == DIAGONAL:
        return mu + np.sqrt(np.maximum(cov, VAR_FLOOR)) * w
    chol = np.linalg.cholesky(floor_variances(cov, "dense"))
    return mu + (chol @ w[..., None])[..., 0]


def marginal_tilde_sampler(fused: FusedPrediction, preds: EnsemblePredictions, rng: np.random.Generator,
                           size: int | None = None, q: QuantizationSpec | None = None,
                           gain_scale: float = 1.0) -> np.ndarray:
    """Draws of the propagated Infoprop state with member, w and u all marginalized.

    Each draw picks a member uniformly, samples s_hat from it, conditions, and
    samples the conditioned belief. Returns (n,) for ``size=None`` else (size, n).
    """
    N = 1 if size is None else int(size)
    n = fused.dim
    q = q or QuantizationSpec.uniform(n)
    members = rng.integers(len(preds), size=N)
    w = rng.standard_normal((N, n))
    u = rng.standard_normal((N, n))
    means = np.broadcast_to(preds.means[:, None], (len(preds), N) + preds.means.shape[1:])
    covs = np.broadcast_to(preds.covs[:, None], (len(preds), N) + preds.covs.shape[1:])
    s_hat = member_samples(means, covs, members, w, preds.mode)
    step = condition_arrays(fused.mu_bar, fused.sigma_bar, fused.sigma_delta, s_hat,
                            q.for_dim(n), u, fused.mode, gain_scale)
    return step.propagated_state[0] if size is None else step.propagated_state

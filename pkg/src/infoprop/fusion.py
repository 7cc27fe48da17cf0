"""Signal/noise decomposition of an ensemble prediction.

The ensemble members are fused with covariance intersection (uniform weights 1/E)
into a maximum-likelihood estimate of the environment transition, and the
spread of member means around that estimate gives the epistemic variance.

All array functions take member-stacked inputs with the member axis first:
means (E, ..., n) and covariances (E, ..., n) in diagonal mode or
(E, ..., n, n) in dense mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsemblePredictions
from .gaussian import DIAGONAL, GaussianBelief, floor_variances


class SingularPrecisionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FusedPrediction:
    mu_bar: np.ndarray
    sigma_bar: np.ndarray
    sigma_delta: np.ndarray
    member_means: np.ndarray
    mode: str = DIAGONAL

    @property
    def dim(self) -> int:
        return self.mu_bar.shape[-1]

    @property
    def ensemble_size(self) -> int:
        return self.member_means.shape[0]

    def belief(self) -> GaussianBelief:
        """The estimated environment state S-bar as a Gaussian."""
        return GaussianBelief(self.mu_bar, self.sigma_bar, self.mode)

    def diag_sigma_bar(self) -> np.ndarray:
        return self.sigma_bar if self.mode == DIAGONAL else np.diagonal(self.sigma_bar, axis1=-2, axis2=-1)

    def diag_sigma_delta(self) -> np.ndarray:
        return self.sigma_delta if self.mode == DIAGONAL else np.diagonal(self.sigma_delta, axis1=-2, axis2=-1)


def _member_sum(x: np.ndarray) -> np.ndarray:
    # sorting along the member axis makes the sum independent of member order
    return np.sort(x, axis=0).sum(axis=0)


def ci_fuse_arrays(means, covs, mode: str = DIAGONAL):
    """Covariance-intersection fusion with uniform weights.

    sigma_bar = (mean_e inv(cov_e))^-1,  mu_bar = sigma_bar @ mean_e(inv(cov_e) @ mean_e).
    """
    means = np.asarray(means, dtype=float)
    covs = floor_variances(covs, mode)
    E = means.shape[0]
    if mode == DIAGONAL:
        # precisions relative to the tightest member keep identical members exact
        v_ref = covs.min(axis=0)
        rel_prec = v_ref / covs
        rel_sum = _member_sum(rel_prec)
        sigma_bar = v_ref * (E / rel_sum)
        mu_ref = means.min(axis=0)
        mu_bar = mu_ref + _member_sum(rel_prec * (means - mu_ref)) / rel_sum
        return mu_bar, sigma_bar

    n = means.shape[-1]
    eye = np.broadcast_to(np.eye(n), covs.shape)
    try:
        np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as err:
        raise SingularPrecisionError("member covariance is not positive definite") from err
    # LU solves rather than Cholesky round trips: in one dimension they reduce to a
    # single correctly rounded division, so scalar cases come out exact
    precisions = np.linalg.solve(covs, eye)
    info_means = np.linalg.solve(covs, means[..., None])[..., 0]
    mean_prec = _member_sum(precisions) / E
    mean_prec = 0.5 * (mean_prec + np.swapaxes(mean_prec, -1, -2))
    try:
        np.linalg.cholesky(mean_prec)
    except np.linalg.LinAlgError as err:
        raise SingularPrecisionError("mean precision is singular") from err
    sigma_bar = np.linalg.solve(mean_prec, np.broadcast_to(np.eye(n), mean_prec.shape))
    sigma_bar = 0.5 * (sigma_bar + np.swapaxes(sigma_bar, -1, -2))
    mu_bar = np.linalg.solve(mean_prec, (_member_sum(info_means) / E)[..., None])[..., 0]
    return mu_bar, sigma_bar


def epistemic_variance_arrays(means, mu_bar, mode: str = DIAGONAL):
    """Mean outer product of member-mean deviations from mu_bar (per-dimension in diagonal mode)."""
    dev = np.asarray(means, dtype=float) - mu_bar
    E = dev.shape[0]
    if mode == DIAGONAL:
        return _member_sum(dev ** 2) / E
    return _member_sum(dev[..., :, None] * dev[..., None, :]) / E


def ci_fuse(preds: EnsemblePredictions):
    return ci_fuse_arrays(preds.means, preds.covs, preds.mode)


def epistemic_variance(preds: EnsemblePredictions, mu_bar) -> np.ndarray:
    return epistemic_variance_arrays(preds.means, np.asarray(mu_bar, dtype=float), preds.mode)


def fuse(preds: EnsemblePredictions) -> FusedPrediction:
    mu_bar, sigma_bar = ci_fuse(preds)
    return FusedPrediction(mu_bar, sigma_bar, epistemic_variance(preds, mu_bar), preds.means, preds.mode)


def fuse_arrays(means, covs, mode: str = DIAGONAL) -> FusedPrediction:
    """Batched fuse; leading axes after the member axis are carried through."""
    mu_bar, sigma_bar = ci_fuse_arrays(means, covs, mode)
    return FusedPrediction(mu_bar, sigma_bar, epistemic_variance_arrays(means, mu_bar, mode),
                           np.asarray(means, dtype=float), mode)


def dense_from_diagonal(covs) -> np.ndarray:
    covs = np.asarray(covs, dtype=float)
    out = np.zeros(covs.shape + (covs.shape[-1],))
    idx = np.arange(covs.shape[-1])
    out[..., idx, idx] = covs
    return out


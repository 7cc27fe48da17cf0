"""Gaussian primitives: beliefs, Cholesky factors, sampling, quantized entropy."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

VAR_FLOOR = 1e-12
DEFAULT_DELTA_Z = 1e-6
LOG2_2PIE = np.log2(2.0 * np.pi * np.e)

DIAGONAL = "diagonal"
DENSE = "dense"


class NotPSDError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


def floor_variances(cov: np.ndarray, mode: str = DIAGONAL, floor: float = VAR_FLOOR) -> np.ndarray:
    """Symmetrize (dense) and lift every diagonal entry to at least ``floor``."""
    cov = np.array(cov, dtype=float)
    if mode == DIAGONAL:
        return np.maximum(cov, floor)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    idx = np.arange(cov.shape[-1])
    cov[..., idx, idx] = np.maximum(cov[..., idx, idx], floor)
    return cov


def floor_eigenvalues(cov: np.ndarray, floor: float = VAR_FLOOR) -> np.ndarray:
    """Symmetrize and lift every eigenvalue to at least ``floor`` (batched).

    Matrices that are already well above the floor come back unchanged up to
    rounding; rank-deficient ones become positive definite.
    """
    cov = np.array(cov, dtype=float)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    vals, vecs = np.linalg.eigh(cov)
    if np.all(vals >= floor):
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals[..., None, :]) @ np.swapaxes(vecs, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T == cov, after symmetrizing and flooring."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[-1] != cov.shape[-2]:
        raise DimensionMismatchError(f"covariance must be square, got {cov.shape}")
    try:
        return np.linalg.cholesky(floor_variances(cov, DENSE))
    except np.linalg.LinAlgError as err:
        raise NotPSDError("covariance is not positive definite after flooring") from err


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Mean and covariance of a Gaussian state belief.

    In diagonal mode ``cov`` holds only the per-dimension variances.
    """

    mean: np.ndarray
    cov: np.ndarray
    mode: str = DIAGONAL

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        n = mean.shape[0]
        if self.mode == DIAGONAL:
            cov = np.broadcast_to(cov, (n,)).copy() if cov.ndim == 0 else cov
            if cov.shape != (n,):
                raise DimensionMismatchError(f"diagonal cov shape {cov.shape} != ({n},)")
        elif self.mode == DENSE:
            cov = np.atleast_2d(cov)
            if cov.shape != (n, n):
                raise DimensionMismatchError(f"dense cov shape {cov.shape} != ({n}, {n})")
            cov = 0.5 * (cov + cov.T)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variances(self) -> np.ndarray:
        return self.cov if self.mode == DIAGONAL else np.diag(self.cov)

    def dense_cov(self) -> np.ndarray:
        return np.diag(self.cov) if self.mode == DIAGONAL else self.cov.copy()

    @cached_property
    def chol(self) -> np.ndarray:
        if self.mode == DIAGONAL:
            return np.diag(np.sqrt(floor_variances(self.cov)))
        return cholesky(self.cov)

    def floored(self) -> "GaussianBelief":
        return GaussianBelief(self.mean, floor_variances(self.cov, self.mode), self.mode)

    def as_dense(self) -> "GaussianBelief":
        return GaussianBelief(self.mean, self.dense_cov(), DENSE)


@dataclass(frozen=True, eq=False)
class QuantizationSpec:
    """Per-dimension discretization step used by the quantized entropy."""

    delta_z: np.ndarray

    def __post_init__(self):
        dz = np.atleast_1d(np.asarray(self.delta_z, dtype=float))
        if not np.all(dz > 0):
            raise ValueError("every delta_z entry must be positive")
        dz.setflags(write=False)
        object.__setattr__(self, "delta_z", dz)

    @classmethod
    def uniform(cls, dim: int, delta_z: float = DEFAULT_DELTA_Z) -> "QuantizationSpec":
        return cls(np.full(dim, delta_z))

    def for_dim(self, dim: int) -> np.ndarray:
        if self.delta_z.shape[0] == dim:
            return self.delta_z
        if self.delta_z.shape[0] == 1:
            return np.full(dim, self.delta_z[0])
        raise DimensionMismatchError(f"quantization has {self.delta_z.shape[0]} dims, belief has {dim}")


def sample(belief: GaussianBelief, noise: np.ndarray) -> np.ndarray:
    """Return ``mean + L @ noise``."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-1] != belief.dim:
        raise DimensionMismatchError(f"noise dim {noise.shape[-1]} != belief dim {belief.dim}")
    if belief.mode == DIAGONAL:
        return belief.mean + np.sqrt(floor_variances(belief.cov)) * noise
    return belief.mean + noise @ belief.chol.T


def entropy_bits_per_dim(variances: np.ndarray, delta_z: np.ndarray) -> np.ndarray:
    """Quantized entropy of independent 1-D Gaussians, elementwise; broadcasts over leading axes."""
    var = floor_variances(variances)
    return 0.5 * (LOG2_2PIE + np.log2(var)) - np.log2(delta_z)


def entropy_floor(q: QuantizationSpec, dim: int | None = None) -> np.ndarray:
    """Per-dimension entropy of a belief whose variance sits at the floor."""
    dz = q.delta_z if dim is None else q.for_dim(dim)
    return entropy_bits_per_dim(np.full(dz.shape, VAR_FLOOR), dz)


def quantized_entropy(belief: GaussianBelief, q: QuantizationSpec) -> float:
    """0.5 * log2((2 pi e)^n |Sigma|) - sum_k log2(dz_k), in bits."""
    n = belief.dim
    dz = q.for_dim(n)
    if belief.mode == DIAGONAL:
        return float(entropy_bits_per_dim(belief.cov, dz).sum())
    _, logdet = np.linalg.slogdet(floor_variances(belief.cov, DENSE))
    return float(0.5 * (n * LOG2_2PIE + logdet / np.log(2.0)) - np.log2(dz).sum())


def wasserstein1_1d(samples_a, samples_b) -> float:
    """W1 distance between two 1-D empirical distributions.

    Equal sample counts reduce to the mean absolute difference of order statistics.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptyInputError("wasserstein1_1d needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    return float(stats.wasserstein_distance(a, b))

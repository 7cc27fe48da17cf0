"""Brute-force checks of the fusion, conditioning and entropy claims.

Oracles compute their reference values from independent formulas (explicit
matrix algebra, scipy's W1, Monte-Carlo sampling) and never call into the
fusion or conditioning code they check, except to obtain the samples under test.
"""
from __future__ import annotations

import numpy as np
from scipy import stats

from .ensemble import EnsemblePredictions
from .fusion import FusedPrediction, fuse
from .gaussian import DIAGONAL, QuantizationSpec
from .kernel import marginal_tilde_sampler
from .rollout import Trajectory

DISTRIBUTION_BOUND_C = 8.0
ADDITIVITY_TOL_BITS = 1e-9


class SingularJointError(ValueError):
    pass


def symmetric_ensemble(rng: np.random.Generator, dim: int, ratio: float, mu_bar=None, sigma_bar=None,
                       n_pairs: int | None = None) -> EnsemblePredictions:
    """Equal-variance diagonal ensemble with known fused moments.

    Member means come in antithetic pairs around ``mu_bar`` and are scaled so the
    per-dimension epistemic variance is exactly (ratio * sqrt(sigma_bar))^2.
    """
    mu_bar = rng.normal(0.0, 3.0, dim) if mu_bar is None else np.asarray(mu_bar, dtype=float)
    sigma_bar = np.exp(rng.uniform(np.log(0.05), np.log(5.0), dim)) if sigma_bar is None \
        else np.asarray(sigma_bar, dtype=float)
    pairs = int(rng.integers(1, 5)) if n_pairs is None else n_pairs
    z = rng.standard_normal((pairs, dim))
    z = np.concatenate([z, -z])
    z = z / np.sqrt(np.mean(z ** 2, axis=0))
    means = mu_bar + ratio * np.sqrt(sigma_bar) * z
    return EnsemblePredictions.from_arrays(means, np.broadcast_to(sigma_bar, means.shape))


def direct_fused_samples(fused: FusedPrediction, N: int, rng: np.random.Generator) -> np.ndarray:
    """N draws of S-bar = mu_bar + L_bar W."""
    W = rng.standard_normal((N, fused.dim))
    if fused.mode == DIAGONAL:
        return fused.mu_bar + np.sqrt(fused.sigma_bar) * W
    return fused.mu_bar + W @ np.linalg.cholesky(fused.sigma_bar).T


def oracle_conditioned_distribution(fused: FusedPrediction, preds: EnsemblePredictions, N: int,
                                 rng: np.random.Generator, c: float = DISTRIBUTION_BOUND_C,
                                 gain_scale: float = 1.0) -> dict:
    """Two-sample W1 between marginalized Infoprop draws and direct S-bar draws, per dimension.

    Passes when every dimension's W1 is at most c * sigma_bar_k / sqrt(N).
    """
    if N < 10_000:
        raise ValueError("the distributional oracle needs N >= 1e4")
    tilde = marginal_tilde_sampler(fused, preds, rng, size=N, gain_scale=gain_scale)
    direct = direct_fused_samples(fused, N, rng)
    sd = np.sqrt(fused.diag_sigma_bar())
    w1 = np.array([stats.wasserstein_distance(tilde[:, k], direct[:, k]) for k in range(fused.dim)])
    bound = c * sd / np.sqrt(N)
    return {
        "w1_per_dim": w1.tolist(),
        "bound_per_dim": bound.tolist(),
        "pass": bool(np.all(w1 <= bound)),
        "N": int(N),
        "c": c,
        "gain_scale": gain_scale,
    }


def oracle_entropy_additivity(trajectory: Trajectory, q: QuantizationSpec,
                              tol: float = ADDITIVITY_TOL_BITS) -> dict:
    """Joint entropy of the block-diagonal stack of per-step conditioned covariances vs the per-step sum."""
    blocks = []
    for s in trajectory.steps:
        cov = np.asarray(s.tilde_cov, dtype=float)
        blocks.append(np.diag(cov) if cov.ndim == 1 else cov)
    if not blocks:
        return {"lhs_bits": 0.0, "rhs_bits": 0.0, "abs_diff": 0.0, "pass": True, "tol": tol}
    n = blocks[0].shape[0]
    size = n * len(blocks)
    joint = np.zeros((size, size))
    for t, b in enumerate(blocks):
        joint[t * n:(t + 1) * n, t * n:(t + 1) * n] = b
    sign, logdet = np.linalg.slogdet(joint)
    if sign <= 0:
        raise ValueError("recorded conditioned covariances are not positive definite")
    dz = np.broadcast_to(q.delta_z if q.delta_z.shape[0] == n else q.delta_z[:1], (n,))
    lhs = 0.5 * (size * np.log2(2 * np.pi * np.e) + logdet / np.log(2)) - len(blocks) * np.sum(np.log2(dz))
    rhs = float(sum(s.entropy_total for s in trajectory.steps))
    diff = abs(lhs - rhs)
    return {"lhs_bits": float(lhs), "rhs_bits": rhs, "abs_diff": float(diff), "pass": bool(diff <= tol),
            "tol": tol, "steps": len(blocks)}


def oracle_kalman_fusion_dense(member_means, joint_cov, H=None):
    """Generalized-least-squares fusion of E jointly Gaussian estimates of one state.

    member_means: (E, n); joint_cov: (E*n, E*n). Singular joints (e.g. perfectly
    correlated members) are handled with the pseudo-inverse.
    """
    member_means = np.atleast_2d(np.asarray(member_means, dtype=float))
    E, n = member_means.shape
    joint_cov = np.asarray(joint_cov, dtype=float)
    H = np.tile(np.eye(n), (E, 1)) if H is None else np.asarray(H, dtype=float)
    stacked = member_means.reshape(-1)
    if np.linalg.matrix_rank(joint_cov) < joint_cov.shape[0]:
        joint_inv = np.linalg.pinv(joint_cov)
    else:
        joint_inv = np.linalg.inv(joint_cov)
    info = H.T @ joint_inv @ H
    if np.linalg.matrix_rank(info) < n:
        raise SingularJointError("H^T Sigma^-1 H is singular")
    cov = np.linalg.inv(info)
    mean = cov @ H.T @ joint_inv @ stacked
    return mean, 0.5 * (cov + cov.T)


def mean_outer_product(means, center) -> np.ndarray:
    """(1/E) sum_e (m_e - c)(m_e - c)^T by explicit loop."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n = means.shape[1]
    acc = np.zeros((n, n))
    for m in means:
        d = (m - center).reshape(n, 1)
        acc += d @ d.T
    return acc / means.shape[0]


def precision_weighted_mean(means, covs):
    """Textbook uniform-weight CI fusion with explicit matrix inverses."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    covs = [np.atleast_2d(np.diag(c) if np.ndim(c) == 1 else np.asarray(c, dtype=float)) for c in covs]
    E = len(covs)
    precs = [np.linalg.inv(c) for c in covs]
    mean_prec = sum(precs) / E
    cov = np.linalg.inv(mean_prec)
    mean = cov @ (sum(p @ m for p, m in zip(precs, means)) / E)
    return mean, cov


def scan_quantile(values, zeta: float) -> float:
    """Smallest h with empirical CDF >= zeta by scanning the distinct sorted values."""
    values = [float(v) for v in values]
    N = len(values)
    for h in sorted(set(values)):
        if sum(1 for v in values if v <= h) / N >= zeta:
            return h
    return max(values)


def variance_consistency_fraction(model, env, states, actions) -> float:
    """Share of (state, action) points where every member variance is at least the true noise variance."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    _, variances = model.predict_batch(states, actions)
    true_var = np.stack([
        np.diag(np.atleast_2d(env.noise_chol_fn(s, a)) @ np.atleast_2d(env.noise_chol_fn(s, a)).T)
        for s, a in zip(states, actions)
    ])
    return float(np.mean(np.all(variances >= true_var[None], axis=(0, 2))))


def conditioned_distribution_suite(seed: int, n_cases: int = 24, N: int = 100_000, gain_scale: float = 1.0,
                   ratios=(0.0, 0.5, 1.0, 2.0), dims=(1, 2)) -> dict:
    """Run the distributional oracle on randomized symmetric ensembles.

    Cases cycle through every (dim, ratio) combination; each case has its own stream.
    """
    from .seeding import derive_rng

    combos = [(d, r) for d in dims for r in ratios]
    cases = []
    for i in range(n_cases):
        dim, ratio = combos[i % len(combos)]
        rng = derive_rng(seed, "conditioned-case", i)
        preds = symmetric_ensemble(rng, dim, ratio)
        fused = fuse(preds)
        report = oracle_conditioned_distribution(fused, preds, N, rng, gain_scale=gain_scale)
        report.update({"case": i, "dim": dim, "ratio": ratio, "ensemble_size": len(preds)})
        cases.append(report)
    return {"seed": seed, "gain_scale": gain_scale, "cases": cases, "pass": all(c["pass"] for c in cases)}


def random_spd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T / n + 0.1 * np.eye(n))


def random_ensemble_arrays(rng: np.random.Generator, dim: int, E: int, mode: str):
    """Random member means and covariances (diagonal variances or dense SPD matrices)."""
    means = rng.normal(0.0, 2.0, (E, dim))
    if mode == DIAGONAL:
        covs = np.exp(rng.uniform(np.log(1e-3), np.log(1e2), (E, dim)))
    else:
        covs = np.stack([random_spd(rng, dim, np.exp(rng.uniform(-2, 2))) for _ in range(E)])
    return means, covs


def _rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def fusion_identity_suite(seed: int, n_sets: int = 1000, tol: float = 1e-9) -> dict:
    """CI fusion against explicit-inverse fusion on random diagonal and dense ensembles."""
    from .fusion import ci_fuse_arrays
    from .gaussian import DENSE
    from .seeding import derive_rng

    worst = 0.0
    for i in range(n_sets):
        rng = derive_rng(seed, "fusion-identity", i)
        mode = DIAGONAL if i % 2 == 0 else DENSE
        dim, E = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        means, covs = random_ensemble_arrays(rng, dim, E, mode)
        mu_bar, sigma_bar = ci_fuse_arrays(means, covs, mode)
        ref_mu, ref_cov = precision_weighted_mean(means, covs)
        # identity: inv(sigma_bar) mu_bar == mean_e inv(cov_e) mu_e
        cov_full = np.diag(sigma_bar) if mode == DIAGONAL else sigma_bar
        lhs = np.linalg.solve(cov_full, mu_bar)
        rhs = np.linalg.solve(ref_cov, ref_mu)
        worst = max(worst, _rel_err(lhs, rhs), _rel_err(cov_full, ref_cov), _rel_err(mu_bar, ref_mu))
    hand = []
    for means, covs, expect in (([[0.0], [2.0]], [[1.0], [1.0]], (1.0, 1.0)),
                                ([[0.0], [3.0]], [[1.0], [4.0]], (0.6, 1.6))):
        for mode, c in ((DIAGONAL, np.array(covs)), (DENSE, np.array(covs)[:, :, None])):
            mu, cov = ci_fuse_arrays(np.array(means), c, mode)
            got = (float(mu[0]), float(np.ravel(cov)[0]))
            hand.append({"mode": mode, "mu_bar": got[0], "sigma_bar": got[1], "expected": list(expect),
                         "pass": got == expect})
    return {"n_sets": n_sets, "max_rel_err": worst, "tol": tol, "hand_examples": hand,
            "pass": bool(worst <= tol and all(h["pass"] for h in hand))}


def epistemic_variance_suite(seed: int, n_sets: int = 1000, tol: float = 1e-12) -> dict:
    from .fusion import epistemic_variance_arrays
    from .gaussian import DENSE
    from .seeding import derive_rng

    worst = 0.0
    for i in range(n_sets):
        rng = derive_rng(seed, "epistemic-variance", i)
        dim, E = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        means = rng.normal(0.0, 1.0, (E, dim))
        center = rng.normal(0.0, 1.0, dim)
        got = epistemic_variance_arrays(means, center, DENSE)
        ref = mean_outer_product(means, center)
        got_diag = epistemic_variance_arrays(means, center, DIAGONAL)
        worst = max(worst, float(np.max(np.abs(got - ref))), float(np.max(np.abs(got_diag - np.diag(ref)))))
    return {"n_sets": n_sets, "max_abs_err": worst, "tol": tol, "pass": bool(worst <= tol)}


def quantile_suite(seed: int, n_sets: int = 10_000) -> dict:
    """Calibration quantile vs sort-and-scan on small sets with heavy ties."""
    from .calibration import quantile
    from .seeding import derive_rng

    mismatches = 0
    for i in range(n_sets):
        rng = derive_rng(seed, "quantile", i)
        N = int(rng.integers(1, 40))
        if i % 3 == 0:
            values = rng.integers(-3, 4, N).astype(float)  # many duplicates
        else:
            values = rng.normal(0.0, 5.0, N)
        zetas = [rng.uniform(1e-6, 1.0), 0.01, 0.99, 1.0, int(rng.integers(1, N + 1)) / N]
        for z in zetas:
            if quantile(values, z) != scan_quantile(values, z):
                mismatches += 1
    return {"n_sets": n_sets, "mismatches": mismatches, "pass": mismatches == 0}


def random_synthetic_ensemble(rng: np.random.Generator, dim: int, min_members: int | None = None):
    """Members with state-dependent means and variances, so entropies vary along a rollout.

    By default E >= dim + 1, which keeps the epistemic spread full rank; smaller
    ensembles make the conditioned covariance singular up to the variance floor.
    """
    from .ensemble import SyntheticEnsemble

    lo = dim + 1 if min_members is None else min_members
    E = int(rng.integers(lo, max(lo, 6) + 1))
    gains = rng.normal(1.0, 0.05, (E, dim))
    offsets = rng.normal(0.0, 0.1, (E, dim))
    base_var = np.exp(rng.uniform(np.log(1e-4), np.log(1e-1), (E, dim)))
    slope = rng.uniform(0.0, 0.5, (E, dim))

    def mean_fn(g, o):
        return lambda s, a: g * s + a[:, :1] + o

    def var_fn(v, k):
        return lambda s, a: v * (1.0 + k * np.tanh(s) ** 2)

    return SyntheticEnsemble([mean_fn(g, o) for g, o in zip(gains, offsets)],
                             [var_fn(v, k) for v, k in zip(base_var, slope)], dim)


def additivity_suite(seed: int, n_traj: int = 100, max_len: int = 50, tol: float = ADDITIVITY_TOL_BITS,
                     rank_deficient: bool = False) -> dict:
    """Entropy additivity on random Infoprop trajectories, alternating diagonal and dense mode.

    With ``rank_deficient`` the ensembles have two members, so dense conditioned
    covariances sit on the variance floor in some directions; there the tolerance
    becomes eps * condition number * steps (the accuracy any log-determinant can reach).
    """
    from .envs import GaussianPolicy
    from .gaussian import DENSE
    from .rollout import INFOPROP, Thresholds, run_rollouts
    from .seeding import derive_rng

    worst, failures = 0.0, 0
    for i in range(n_traj):
        rng = derive_rng(seed, "additivity", i)
        dim = int(rng.integers(1, 4))
        mode = DIAGONAL if i % 2 == 0 else DENSE
        model = random_synthetic_ensemble(rng, dim, 2 if rank_deficient else None)
        length = int(rng.integers(1, max_len + 1))
        q = QuantizationSpec.uniform(dim, float(np.exp(rng.uniform(np.log(1e-8), np.log(1e-2)))))
        traj = run_rollouts(model, GaussianPolicy(0.1), [rng.normal(0, 1, dim)], length, INFOPROP,
                            Thresholds.unbounded(dim), q, rngs=[derive_rng(seed, "additivity-rollout", i)],
                            mode=mode)[0]
        case_tol = tol
        if rank_deficient:
            cond = max(np.linalg.cond(np.atleast_2d(np.diag(s.tilde_cov) if s.tilde_cov.ndim == 1
                                                    else s.tilde_cov)) for s in traj.steps)
            case_tol = max(tol, 4 * np.finfo(float).eps * cond * len(traj) * dim)
        report = oracle_entropy_additivity(traj, q, case_tol)
        worst = max(worst, report["abs_diff"])
        failures += (not report["pass"]) or len(traj) != length
    return {"n_trajectories": n_traj, "max_abs_diff_bits": worst, "tol": tol, "failures": failures,
            "rank_deficient": rank_deficient, "pass": failures == 0}


def run_all_oracles(seed: int = 0, quick: bool = False) -> dict:
    """Full verification bundle; ``quick`` shrinks set counts but keeps every check."""
    scale = 10 if quick else 1
    t1 = conditioned_distribution_suite(seed, n_cases=24)
    mutant = conditioned_distribution_suite(seed, n_cases=24, gain_scale=0.5)
    report = {
        "seed": seed,
        "conditioned_distribution": t1,
        "conditioned_mutation_gain_halved": {**mutant, "detected": not mutant["pass"]},
        "entropy_additivity": additivity_suite(seed, n_traj=100 // scale),
        "entropy_additivity_rank_deficient": additivity_suite(seed, n_traj=100 // scale, rank_deficient=True),
        "fusion_identity": fusion_identity_suite(seed, n_sets=1000 // scale),
        "epistemic_variance": epistemic_variance_suite(seed, n_sets=1000 // scale),
        "quantile": quantile_suite(seed, n_sets=10_000 // scale),
    }
    report["pass"] = bool(
        t1["pass"] and report["conditioned_mutation_gain_halved"]["detected"]
        and all(report[k]["pass"] for k in ("entropy_additivity", "entropy_additivity_rank_deficient", "fusion_identity",
                                             "epistemic_variance", "quantile"))
    )
    return report

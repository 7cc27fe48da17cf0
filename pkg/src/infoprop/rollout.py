"""Model rollouts: Trajectory Sampling and Infoprop with entropy-based termination."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fusion import dense_from_diagonal, fuse_arrays
from .gaussian import DENSE, DIAGONAL, QuantizationSpec, entropy_floor
from .kernel import condition_arrays, member_samples
from .seeding import derive_rng

TS = "ts"
INFOPROP = "infoprop"
ENV = "env"
MECHANISMS = (TS, INFOPROP)

MAX_LENGTH = "max_length"
SINGLE_STEP_EXCEEDED = "single_step_exceeded"
CUMULATIVE_EXCEEDED = "cumulative_exceeded"
ENV_TERMINAL = "env_terminal"
TERMINATIONS = (MAX_LENGTH, SINGLE_STEP_EXCEEDED, CUMULATIVE_EXCEEDED, ENV_TERMINAL)

THRESHOLD_MARGIN_BITS = 1.0


@dataclass
class Step:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    model_sample: Optional[np.ndarray] = None
    entropy: Optional[np.ndarray] = None
    cumulative_entropy: Optional[np.ndarray] = None
    tilde_cov: Optional[np.ndarray] = None
    entropy_total: Optional[float] = None


@dataclass
class Trajectory:
    start_state: np.ndarray
    steps: list[Step] = field(default_factory=list)
    termination: str = MAX_LENGTH
    termination_dim: Optional[int] = None
    mechanism: str = TS

    def __len__(self) -> int:
        return len(self.steps)

    def states(self) -> np.ndarray:
        """s_0, ..., s_len as an array of shape (len + 1, n)."""
        return np.stack([np.asarray(self.start_state, dtype=float)] + [s.next_state for s in self.steps])

    def actions(self) -> np.ndarray:
        return np.stack([s.action for s in self.steps]) if self.steps else np.zeros((0, 0))

    def entropies(self) -> np.ndarray:
        return np.stack([s.entropy for s in self.steps]) if self.steps else np.zeros((0, 0))

    def cumulative_entropies(self) -> np.ndarray:
        return np.stack([s.cumulative_entropy for s in self.steps]) if self.steps else np.zeros((0, 0))

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x, dtype=float).tolist()

        return {
            "mechanism": self.mechanism,
            "termination": self.termination,
            "termination_dim": self.termination_dim,
            "start_state": arr(self.start_state),
            "steps": [
                {
                    "state": arr(s.state),
                    "action": arr(s.action),
                    "next_state": arr(s.next_state),
                    "model_sample": arr(s.model_sample),
                    "entropy": arr(s.entropy),
                    "cumulative_entropy": arr(s.cumulative_entropy),
                    "tilde_cov": arr(s.tilde_cov),
                    "entropy_total": s.entropy_total,
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        def arr(x):
            return None if x is None else np.asarray(x, dtype=float)

        steps = [
            Step(**{k: (v if k == "entropy_total" else arr(v)) for k, v in s.items()})
            for s in d["steps"]
        ]
        return cls(arr(d["start_state"]), steps, d["termination"], d["termination_dim"], d["mechanism"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        return cls.from_dict(json.loads(text))

    def csv_header(self) -> list[str]:
        n = np.asarray(self.start_state).shape[-1]
        m = self.steps[0].action.shape[-1] if self.steps else 0
        return (["t"] + [f"s{i}" for i in range(n)] + [f"a{i}" for i in range(m)]
                + [f"h{i}" for i in range(n)] + [f"cum_h{i}" for i in range(n)])

    def csv_rows(self) -> list[list]:
        n = np.asarray(self.start_state).shape[-1]
        rows = []
        for t, s in enumerate(self.steps):
            h = s.entropy if s.entropy is not None else np.full(n, np.nan)
            c = s.cumulative_entropy if s.cumulative_entropy is not None else np.full(n, np.nan)
            rows.append([t] + [repr(float(x)) for x in np.concatenate([s.state, s.action, h, c])])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        writer.writerows(self.csv_rows())
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class Thresholds:
    """Per-dimension single-step (lambda1) and cumulative (lambda2) entropy limits in bits."""

    lambda1: np.ndarray
    lambda2: np.ndarray

    def __post_init__(self):
        l1 = np.atleast_1d(np.asarray(self.lambda1, dtype=float))
        l2 = np.atleast_1d(np.asarray(self.lambda2, dtype=float))
        if l1.shape != l2.shape:
            raise ValueError(f"lambda1 {l1.shape} and lambda2 {l2.shape} differ in shape")
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)

    @classmethod
    def unbounded(cls, dim: int) -> "Thresholds":
        return cls(np.full(dim, np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lambda1.shape[0]

    def validate(self, q: QuantizationSpec) -> None:
        floor = entropy_floor(q, self.dim)
        if np.any(self.lambda1 <= floor) or np.any(self.lambda2 <= floor):
            raise ValueError("every threshold must lie strictly above the entropy floor")


PolicySampler = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def _member_covs(variances, mode):
    return variances if mode == DIAGONAL else dense_from_diagonal(variances)


def run_rollouts(model, policy: PolicySampler, starts, T: int, mechanism: str = INFOPROP,
                 thresholds: Thresholds | None = None, q: QuantizationSpec | None = None,
                 rngs: list[np.random.Generator] | None = None, seed: int = 0, mode: str = DIAGONAL,
                 terminal_fn: Callable | None = None, gain_scale: float = 1.0,
                 policy_rngs: list[np.random.Generator] | None = None) -> list[Trajectory]:
    """Advance all rollouts in lockstep; rollout i draws only from its own streams.

    Rollout i samples actions from ``policy_rngs[i]`` and member index, w and
    u (Infoprop only), in that order, from ``rngs[i]``. Without explicit
    streams these are derive_rng(seed, "policy", i) and derive_rng(seed, "rollout", i),
    so environment, TS and Infoprop rollouts with one seed share action noise.
    When only ``rngs`` is given the policy draws from it too.
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    if T < 1:
        raise ValueError("T must be >= 1")
    starts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in starts]
    B = len(starts)
    if B == 0:
        return []
    n = model.state_dim
    q = q or QuantizationSpec.uniform(n)
    dz = q.for_dim(n)
    if thresholds is None:
        if mechanism == INFOPROP:
            raise ValueError("Infoprop rollouts need thresholds (use Thresholds.unbounded to disable)")
        thresholds = Thresholds.unbounded(n)
    if rngs is None:
        rngs = [derive_rng(seed, "rollout", i) for i in range(B)]
        if policy_rngs is None:
            policy_rngs = [derive_rng(seed, "policy", i) for i in range(B)]
    if policy_rngs is None:
        policy_rngs = rngs
    E = model.ensemble_size

    trajs = [Trajectory(start_state=s.copy(), mechanism=mechanism) for s in starts]
    states = np.stack(starts)
    cumulative = np.zeros((B, n))
    active = np.ones(B, dtype=bool)

    for _ in range(T):
        if terminal_fn is not None:
            for i in np.flatnonzero(active):
                if terminal_fn(states[i]):
                    trajs[i].termination = ENV_TERMINAL
                    active[i] = False
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        actions, members, w, u = [], [], [], []
        for i in idx:
            rng = rngs[i]
            actions.append(np.atleast_1d(np.asarray(policy(states[i], policy_rngs[i]), dtype=float)))
            members.append(int(rng.integers(E)))
            w.append(rng.standard_normal(n))
            if mechanism == INFOPROP:
                u.append(rng.standard_normal(n))
        actions = np.stack(actions)
        members = np.asarray(members)
        w = np.stack(w)
        u = np.stack(u) if u else np.zeros_like(w)

        means, variances = model.predict_batch(states[idx], actions)
        covs = _member_covs(variances, mode)
        s_hat = member_samples(means, covs, members, w, mode)
        fused = fuse_arrays(means, covs, mode)
        step = condition_arrays(fused.mu_bar, fused.sigma_bar, fused.sigma_delta, s_hat, dz, u, mode,
                                gain_scale)
        h = step.entropy_per_dim
        next_states = s_hat if mechanism == TS else step.propagated_state

        for j, i in enumerate(idx):
            if mechanism == INFOPROP:
                over1 = np.flatnonzero(h[j] > thresholds.lambda1)
                if over1.size:
                    trajs[i].termination, trajs[i].termination_dim = SINGLE_STEP_EXCEEDED, int(over1[0])
                    active[i] = False
                    continue
                over2 = np.flatnonzero(cumulative[i] + h[j] > thresholds.lambda2)
                if over2.size:
                    trajs[i].termination, trajs[i].termination_dim = CUMULATIVE_EXCEEDED, int(over2[0])
                    active[i] = False
                    continue
            cumulative[i] = cumulative[i] + h[j]
            trajs[i].steps.append(Step(
                state=states[i].copy(),
                action=actions[j],
                next_state=next_states[j].copy(),
                model_sample=s_hat[j].copy(),
                entropy=h[j].copy(),
                cumulative_entropy=cumulative[i].copy(),
                tilde_cov=np.array(step.tilde_cov[j]),
                entropy_total=float(step.entropy_total[j]),
            ))
            states[i] = next_states[j]
    return trajs


def ts_rollout(model, policy, s0, T, rng, q=None, mode=DIAGONAL) -> Trajectory:
    return run_rollouts(model, policy, [s0], T, TS, q=q, rngs=[rng], mode=mode)[0]


def infoprop_rollout(model, policy, s0, T, thresholds, q=None, rng=None, mode=DIAGONAL,
                     terminal_fn=None) -> Trajectory:
    rng = rng if rng is not None else np.random.default_rng()
    return run_rollouts(model, policy, [s0], T, INFOPROP, thresholds, q, rngs=[rng], mode=mode,
                        terminal_fn=terminal_fn)[0]


def batch_rollout(model, policy, starts, T, thresholds=None, mechanism=INFOPROP, seed=0,
                  q=None, mode=DIAGONAL, terminal_fn=None) -> list[Trajectory]:
    """Independent rollouts, one per start, in input order; streams as in run_rollouts."""
    return run_rollouts(model, policy, starts, T, mechanism, thresholds, q, seed=seed, mode=mode,
                        terminal_fn=terminal_fn)


def cross_sections(trajs: list[Trajectory], T: int) -> list[np.ndarray]:
    """For t = 0..T, the states s_t of every trajectory that reached step t, shape (count, n)."""
    paths = [tr.states() for tr in trajs]
    n = paths[0].shape[1] if paths else 0
    return [
        np.stack([p[t] for p in paths if p.shape[0] > t]) if any(p.shape[0] > t for p in paths)
        else np.zeros((0, n))
        for t in range(T + 1)
    ]


SUMMARY_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def summarize(trajs: list[Trajectory], T: int) -> dict:
    """Length histogram, termination counts and per-step cross-sectional statistics."""
    lengths = [len(tr) for tr in trajs]
    reasons = {r: 0 for r in TERMINATIONS}
    for tr in trajs:
        reasons[tr.termination] += 1
    per_step = []
    for t, xs in enumerate(cross_sections(trajs, T)):
        entry = {"t": t, "count": int(xs.shape[0])}
        if xs.shape[0]:
            entry["mean"] = xs.mean(axis=0).tolist()
            entry["std"] = xs.std(axis=0).tolist()
            entry["quantiles"] = {
                str(int(qq * 100)): np.quantile(xs, qq, axis=0).tolist() for qq in SUMMARY_QUANTILES
            }
        per_step.append(entry)
    return {
        "n_trajectories": len(trajs),
        "mean_length": float(np.mean(lengths)) if lengths else 0.0,
        "length_histogram": {str(k): lengths.count(k) for k in sorted(set(lengths))},
        "termination_counts": reasons,
        "per_step": per_step,
    }

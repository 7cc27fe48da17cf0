"""Distributional comparison of rollout sets over time."""
from __future__ import annotations

import numpy as np

from .gaussian import wasserstein1_1d
from .rollout import Trajectory, cross_sections


def horizon(trajs: list[Trajectory]) -> int:
    return max((len(tr) for tr in trajs), default=0)


def w1_over_time(reference: list[Trajectory], candidate: list[Trajectory]) -> dict:
    """Per-step, per-dimension W1 between the two sets' cross-sections.

    When the sets reach different horizons the comparison is cut at the shorter
    one and ``truncated`` is set.
    """
    if not reference or not candidate:
        raise ValueError("both trajectory sets must be non-empty")
    h_ref, h_cand = horizon(reference), horizon(candidate)
    T = min(h_ref, h_cand)
    ref_x, cand_x = cross_sections(reference, T), cross_sections(candidate, T)
    n = ref_x[0].shape[1]
    rows = []
    for t in range(T + 1):
        a, b = ref_x[t], cand_x[t]
        if a.shape[0] == 0 or b.shape[0] == 0:
            break
        rows.append({
            "t": t,
            "n_reference": int(a.shape[0]),
            "n_candidate": int(b.shape[0]),
            "w1": [wasserstein1_1d(a[:, k], b[:, k]) for k in range(n)],
            "std_reference": a.std(axis=0).tolist(),
            "std_candidate": b.std(axis=0).tolist(),
        })
    return {
        "dim": n,
        "horizon_reference": h_ref,
        "horizon_candidate": h_cand,
        "truncated": h_ref != h_cand or len(rows) < T + 1,
        "per_step": rows,
    }


def entropy_statistics(trajs: list[Trajectory]) -> dict | None:
    """Mean/max of per-step entropies and final cumulative entropies, when recorded."""
    per_step = [tr.entropies() for tr in trajs if tr.steps and tr.steps[0].entropy is not None]
    if not per_step:
        return None
    flat = np.concatenate(per_step, axis=0)
    final = np.stack([tr.steps[-1].cumulative_entropy for tr in trajs
                      if tr.steps and tr.steps[-1].cumulative_entropy is not None])
    return {
        "step_entropy_mean": flat.mean(axis=0).tolist(),
        "step_entropy_max": flat.max(axis=0).tolist(),
        "final_cumulative_mean": final.mean(axis=0).tolist(),
    }


def metrics_csv(metrics: dict) -> str:
    """t, n_reference, n_candidate, w1_0..w1_{n-1}, std_ref_*, std_cand_*."""
    n = metrics["dim"]
    header = (["t", "n_reference", "n_candidate"] + [f"w1_{k}" for k in range(n)]
              + [f"std_ref_{k}" for k in range(n)] + [f"std_cand_{k}" for k in range(n)])
    lines = [",".join(header)]
    for r in metrics["per_step"]:
        vals = r["w1"] + r["std_reference"] + r["std_candidate"]
        lines.append(",".join([str(r["t"]), str(r["n_reference"]), str(r["n_candidate"])]
                              + [repr(float(v)) for v in vals]))
    return "\n".join(lines) + "\n"

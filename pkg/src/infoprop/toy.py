"""Random-walk toy comparison of environment, TS and Infoprop rollouts.

Trains the ensemble on environment data, then compares per-step cross-sections
of model rollouts of each kind against environment rollouts driven by the same
action sequences. Termination is disabled so all rollouts reach T.
"""
from __future__ import annotations

import time

import numpy as np

from .config import ExperimentConfig
from .pipeline import cmd_evaluate, cmd_generate, cmd_rollout, cmd_train
from .storage import read_json

T = 100
WINDOW = (20, 100)


def analytic_std(config: ExperimentConfig, t: int) -> float:
    env = config.env.build()
    return float(np.sqrt(t * env.step_variance(config.env.policy().variance)))


def toy_config(seed: int, out) -> ExperimentConfig:
    config = ExperimentConfig(seed=seed, out=str(out))
    config.rollout.thresholds = "unbounded"
    return config


def run(seed: int, out) -> dict:
    config = toy_config(seed, out)
    start = time.perf_counter()
    cmd_generate(config, out)
    cmd_train(config, out)
    env = cmd_rollout(config, "env", out)
    metrics = {}
    for mech in ("ts", "infoprop"):
        path = cmd_rollout(config, mech, out)
        metrics[mech] = read_json(cmd_evaluate(config, env, path, out))
    elapsed = time.perf_counter() - start

    rows = {m: {r["t"]: r for r in metrics[m]["per_step"]} for m in metrics}
    analytic = analytic_std(config, T)
    ts_std = rows["ts"][T]["std_candidate"][0]
    ip_std = rows["infoprop"][T]["std_candidate"][0]
    steps = range(WINDOW[0], WINDOW[1] + 1)
    wins = sum(rows["infoprop"][t]["w1"][0] <= rows["ts"][t]["w1"][0] for t in steps)
    return {
        "seed": seed,
        "analytic_std_T": analytic,
        "env_std_T": rows["ts"][T]["std_reference"][0],
        "ts_std_T": ts_std,
        "infoprop_std_T": ip_std,
        "a_ts_std_exceeds_analytic": ts_std > analytic,
        "b_infoprop_w1_win_fraction": wins / len(steps),
        "b_pass": wins / len(steps) >= 0.8,
        "c_infoprop_std_ratio": ip_std / analytic,
        "c_pass": 0.8 * analytic <= ip_std <= 1.5 * analytic,
        "runtime_s": elapsed,
    }

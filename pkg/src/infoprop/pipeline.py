"""Pipeline stages: generate -> train -> calibrate -> rollout -> evaluate, plus verify.

Each stage reads its inputs from files, writes its outputs atomically into the
run directory together with the resolved config, and records output hashes in
a per-stage manifest. Every random stream derives from ``config.seed`` via a
stage label, so stages can be re-run independently and reproduce byte-identical
payloads.
"""
from __future__ import annotations

import copy
from dataclasses import asdict
from pathlib import Path

import yaml

from .buffer import TransitionBuffer
from .calibration import entropy_sets, load_thresholds, thresholds_from_sets, thresholds_to_dict
from .config import ExperimentConfig
from .ensemble import EnsembleConfig, EnsembleModel, train
from .envs import env_rollouts
from .evaluation import entropy_statistics, metrics_csv, w1_over_time
from .oracles import run_all_oracles
from .rollout import ENV, INFOPROP, TS, Thresholds, Trajectory, run_rollouts, summarize
from .seeding import derive_seed
from .storage import VERSION_STRING, atomic_write_text, read_json, sha256_file, write_json, write_manifest

DATASET = "dataset.csv"
MODEL = "model.json"
LOSS = "train_loss.csv"
THRESHOLDS = "thresholds.json"
CONFIG = "config.yaml"
VERIFY = "verify_report.json"


class MissingInputError(FileNotFoundError):
    pass


class MissingThresholdsError(ValueError):
    pass


def stage_seed(config: ExperimentConfig, stage: str) -> int:
    return derive_seed(config.seed, stage)


def resolve(config: ExperimentConfig) -> ExperimentConfig:
    """Copy of the config with derived per-stage values filled in (the model seed)."""
    resolved = copy.deepcopy(config)
    resolved.ensemble = EnsembleConfig(**{**asdict(config.ensemble), "seed": stage_seed(config, "train")})
    return resolved


def _portable_config(config: ExperimentConfig) -> dict:
    # the output directory is where the file lives, not part of what produced it
    d = config.to_dict()
    d.pop("out")
    return d


def _meta(config: ExperimentConfig, stage: str, **extra) -> dict:
    return {"version": VERSION_STRING, "stage": stage, "seed": config.seed,
            "stage_seed": stage_seed(config, stage), "config": _portable_config(config), **extra}


def _out(config: ExperimentConfig, out=None) -> Path:
    path = Path(out if out is not None else config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_config(out: Path, config: ExperimentConfig) -> None:
    atomic_write_text(out / CONFIG, yaml.safe_dump(_portable_config(config), sort_keys=True))


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise MissingInputError(f"{what} not found: {path}")
    return path


def cmd_generate(config: ExperimentConfig, out=None) -> Path:
    """Environment rollouts flattened into a transition CSV (s*, a*, next_s*)."""
    config = resolve(config)
    out = _out(config, out)
    env, policy = config.env.build(), config.env.policy()
    starts = [config.env.start_state()] * config.dataset.n_rollouts
    trajs = env_rollouts(env, policy, starts, config.dataset.T, seed=stage_seed(config, "generate"))
    buf = TransitionBuffer(env.dim, env.action_dim)
    for tr in trajs:
        for s in tr.steps:
            buf.append(s.state, s.action, s.next_state)
    atomic_write_text(out / DATASET, buf.csv_text())
    _write_config(out, config)
    write_manifest(out, "generate", [DATASET, CONFIG], seed=config.seed,
                   stage_seed=stage_seed(config, "generate"), env=env.spec(), rows=len(buf))
    return out / DATASET


def cmd_train(config: ExperimentConfig, out=None, dataset=None) -> Path:
    config = resolve(config)
    out = _out(config, out)
    buf = TransitionBuffer.from_csv(_require(Path(dataset) if dataset else out / DATASET, "dataset"))
    model = train(buf, config.ensemble)
    payload = {**model.to_dict(), "meta": _meta(config, "train", model_hash=model.content_hash())}
    write_json(out / MODEL, payload)
    lines = ["epoch,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(model.loss_curve)]
    atomic_write_text(out / LOSS, "\n".join(lines) + "\n")
    _write_config(out, config)
    write_manifest(out, "train", [MODEL, LOSS, CONFIG], model_hash=model.content_hash(),
                   transitions=len(buf))
    return out / MODEL


def load_model(path) -> EnsembleModel:
    return EnsembleModel.from_dict(read_json(_require(Path(path), "model checkpoint")))


def cmd_calibrate(config: ExperimentConfig, out=None, model=None, dataset=None) -> Path:
    config = resolve(config)
    out = _out(config, out)
    ens = load_model(model or out / MODEL)
    buf = TransitionBuffer.from_csv(_require(Path(dataset) if dataset else out / DATASET, "dataset"))
    q = config.quantization(ens.state_dim)
    cal = config.calibration
    sets = entropy_sets(ens, buf, q, seed=stage_seed(config, "calibrate"), mode=config.mode,
                        subsample=cal.subsample)
    th = thresholds_from_sets(sets, cal.zeta1, cal.zeta2, cal.xi, q)
    payload = thresholds_to_dict(th, ens.content_hash(), zeta1=cal.zeta1, zeta2=cal.zeta2, xi=cal.xi,
                                 n_entropies=len(sets), meta=_meta(config, "calibrate"))
    write_json(out / THRESHOLDS, payload)
    _write_config(out, config)
    write_manifest(out, "calibrate", [THRESHOLDS, CONFIG], model_hash=ens.content_hash())
    return out / THRESHOLDS


def rollout_names(mechanism: str) -> tuple[str, str, str]:
    stem = f"rollouts_{mechanism}"
    return f"{stem}.json", f"{stem}.csv", f"{stem}_summary.json"


def trajectories_csv(trajs: list[Trajectory]) -> str:
    """Column order: traj, t, s*, a*, h*, cum_h* (entropy columns are nan for environment rollouts)."""
    header = ["traj"] + trajs[0].csv_header()
    lines = [",".join(header)]
    for i, tr in enumerate(trajs):
        for row in tr.csv_rows():
            lines.append(",".join([str(i)] + [str(x) for x in row]))
    return "\n".join(lines) + "\n"


def cmd_rollout(config: ExperimentConfig, mechanism: str | None = None, out=None, model=None,
                thresholds=None) -> Path:
    """Model (ts / infoprop) or environment (env) rollouts from the configured start state.

    All mechanisms share the rollout seed, so rollout i sees the same action
    sequence under every mechanism.
    """
    config = resolve(config)
    out = _out(config, out)
    mechanism = mechanism or config.rollout.mechanism
    if mechanism not in (TS, INFOPROP, ENV):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    rc = config.rollout
    seed = stage_seed(config, "rollout")
    starts = [config.env.start_state()] * rc.n_rollouts
    policy = config.env.policy()
    extra = {"mechanism": mechanism}
    if mechanism == ENV:
        trajs = env_rollouts(config.env.build(), policy, starts, rc.T, seed=seed)
    else:
        ens = load_model(model or out / MODEL)
        extra["model_hash"] = ens.content_hash()
        th = None
        if mechanism == INFOPROP:
            if rc.thresholds == "unbounded":
                th = Thresholds.unbounded(ens.state_dim)
                extra["thresholds"] = "unbounded"
            else:
                path = Path(thresholds) if thresholds else out / THRESHOLDS
                if not path.is_file():
                    raise MissingThresholdsError(f"Infoprop rollouts need a thresholds file ({path} missing); "
                                                 "run calibrate first or set rollout.thresholds: unbounded")
                th = load_thresholds(path, ens.content_hash())
                extra["thresholds"] = {"lambda1": th.lambda1.tolist(), "lambda2": th.lambda2.tolist()}
        trajs = run_rollouts(ens, policy, starts, rc.T, mechanism, th, config.quantization(ens.state_dim),
                             seed=seed, mode=config.mode)
    json_name, csv_name, summary_name = rollout_names(mechanism)
    write_json(out / json_name, {"meta": _meta(config, "rollout", **extra),
                                 "trajectories": [tr.to_dict() for tr in trajs]})
    atomic_write_text(out / csv_name, trajectories_csv(trajs))
    summary = summarize(trajs, rc.T)
    summary["entropy"] = entropy_statistics(trajs)
    write_json(out / summary_name, {"meta": _meta(config, "rollout", **extra), **summary})
    _write_config(out, config)
    write_manifest(out, f"rollout_{mechanism}", [json_name, csv_name, summary_name, CONFIG], **extra)
    return out / json_name


def load_trajectories(path) -> tuple[list[Trajectory], dict]:
    data = read_json(_require(Path(path), "trajectory file"))
    return [Trajectory.from_dict(d) for d in data["trajectories"]], data.get("meta", {})


def cmd_evaluate(config: ExperimentConfig, reference, candidate, out=None) -> Path:
    """Per-step W1 between a reference (usually env) and a candidate rollout set."""
    config = resolve(config)
    out = _out(config, out)
    ref, ref_meta = load_trajectories(reference)
    cand, cand_meta = load_trajectories(candidate)
    metrics = w1_over_time(ref, cand)
    metrics["reference"] = {"file": Path(reference).name, "mechanism": ref_meta.get("mechanism")}
    metrics["candidate"] = {"file": Path(candidate).name, "mechanism": cand_meta.get("mechanism")}
    metrics["candidate_entropy"] = entropy_statistics(cand)
    stem = f"metrics_{Path(reference).stem}_vs_{Path(candidate).stem}"
    write_json(out / f"{stem}.json", {"meta": _meta(config, "evaluate"), **metrics})
    atomic_write_text(out / f"{stem}.csv", metrics_csv(metrics))
    _write_config(out, config)
    write_manifest(out, f"evaluate_{Path(candidate).stem}", [f"{stem}.json", f"{stem}.csv", CONFIG],
                   truncated=metrics["truncated"])
    return out / f"{stem}.json"


def cmd_verify(config: ExperimentConfig, out=None, quick: bool = False) -> tuple[Path, bool]:
    config = resolve(config)
    out = _out(config, out)
    report = run_all_oracles(stage_seed(config, "verify"), quick=quick)
    report["meta"] = _meta(config, "verify", quick=quick)
    write_json(out / VERIFY, report)
    write_manifest(out, "verify", [VERIFY], passed=report["pass"])
    return out / VERIFY, bool(report["pass"])


def run_pipeline(config: ExperimentConfig, out=None, mechanisms=(TS, INFOPROP)) -> dict:
    """generate -> train -> calibrate -> env/model rollouts -> evaluate each model mechanism against env."""
    out = _out(config, out)
    paths = {"dataset": cmd_generate(config, out), "model": cmd_train(config, out),
             "thresholds": cmd_calibrate(config, out), "env": cmd_rollout(config, ENV, out)}
    for mech in mechanisms:
        paths[mech] = cmd_rollout(config, mech, out)
        paths[f"metrics_{mech}"] = cmd_evaluate(config, paths["env"], paths[mech], out)
    return paths


def payload_hashes(out) -> dict:
    """sha256 of every CSV/JSON payload in a run directory, manifests excluded."""
    out = Path(out)
    return {p.name: sha256_file(p) for p in sorted(out.iterdir())
            if p.suffix in (".csv", ".json", ".yaml") and not p.name.endswith(".manifest.json")}


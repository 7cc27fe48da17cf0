"""Experiment configuration: one YAML file resolves every knob of the pipeline."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .calibration import XI, ZETA1, ZETA2
from .ensemble import EnsembleConfig
from .envs import STDDEV, VARIANCE, GaussianPolicy, RandomWalkEnv, linear_gaussian_env
from .gaussian import DEFAULT_DELTA_Z, DENSE, DIAGONAL, QuantizationSpec
from .rollout import INFOPROP, MECHANISMS

RANDOM_WALK = "random_walk"
LINEAR = "linear"
MODE_ALIASES = {"diag": DIAGONAL, DIAGONAL: DIAGONAL, DENSE: DENSE}


class InvalidConfigError(ValueError):
    pass


@dataclass
class EnvConfig:
    """Ground-truth environment and the random behaviour policy.

    ``kind`` is "random_walk" (s' = s + a + noise_std w) or "linear" (s' = A s + B a + L w).
    ``policy_scale`` is a variance unless ``policy_interpretation`` is "stddev".
    """

    kind: str = RANDOM_WALK
    noise_std: float = 0.01
    s0: list = field(default_factory=lambda: [0.0])
    A: list | None = None
    B: list | None = None
    L: list | None = None
    policy_scale: float = 0.1
    policy_interpretation: str = VARIANCE

    def validate(self):
        if self.kind not in (RANDOM_WALK, LINEAR):
            raise InvalidConfigError(f"env.kind must be {RANDOM_WALK!r} or {LINEAR!r}")
        if self.kind == LINEAR and (self.A is None or self.B is None or self.L is None):
            raise InvalidConfigError("linear env needs A, B and L")
        if self.policy_interpretation not in (VARIANCE, STDDEV):
            raise InvalidConfigError("env.policy_interpretation must be 'variance' or 'stddev'")
        if self.policy_scale < 0 or self.noise_std < 0:
            raise InvalidConfigError("scales must be non-negative")

    def build(self):
        if self.kind == RANDOM_WALK:
            return RandomWalkEnv(noise_std=self.noise_std, s0=float(self.s0[0]))
        return linear_gaussian_env(self.A, self.B, self.L)

    def policy(self) -> GaussianPolicy:
        B = np.atleast_2d(self.B) if self.B is not None else np.ones((1, 1))
        return GaussianPolicy(self.policy_scale, B.shape[1] if self.kind == LINEAR else 1,
                              self.policy_interpretation)

    def start_state(self) -> np.ndarray:
        return np.asarray(self.s0, dtype=float)


@dataclass
class DatasetConfig:
    n_rollouts: int = 1000
    T: int = 100

    def validate(self):
        if self.n_rollouts < 1 or self.T < 1:
            raise InvalidConfigError("dataset.n_rollouts and dataset.T must be positive")


@dataclass
class RolloutConfig:
    T: int = 100
    n_rollouts: int = 1000
    mechanism: str = INFOPROP
    # "unbounded" disables both entropy criteria for Infoprop; "calibrated" uses the thresholds file
    thresholds: str = "calibrated"

    def validate(self):
        if self.mechanism not in MECHANISMS:
            raise InvalidConfigError(f"rollout.mechanism must be one of {MECHANISMS}")
        if self.thresholds not in ("calibrated", "unbounded"):
            raise InvalidConfigError("rollout.thresholds must be 'calibrated' or 'unbounded'")
        if self.T < 1 or self.n_rollouts < 1:
            raise InvalidConfigError("rollout.T and rollout.n_rollouts must be positive")


@dataclass
class CalibrationConfig:
    zeta1: float = ZETA1
    zeta2: float = ZETA2
    xi: float = XI
    subsample: int | None = None

    def validate(self):
        for name in ("zeta1", "zeta2"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise InvalidConfigError(f"calibration.{name} must lie in (0, 1]")
        if self.xi <= 0:
            raise InvalidConfigError("calibration.xi must be positive")


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    delta_z: float = DEFAULT_DELTA_Z
    seed: int = 0
    mode: str = DIAGONAL
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODE_ALIASES:
            raise InvalidConfigError(f"mode must be one of {sorted(MODE_ALIASES)}")
        self.mode = MODE_ALIASES[self.mode]
        if not self.delta_z > 0:
            raise InvalidConfigError("delta_z must be positive")
        for part in (self.env, self.dataset, self.rollout, self.calibration):
            part.validate()

    def quantization(self, dim: int) -> QuantizationSpec:
        return QuantizationSpec.uniform(dim, self.delta_z)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        sections = {"env": EnvConfig, "dataset": DatasetConfig, "ensemble": EnsembleConfig,
                    "rollout": RolloutConfig, "calibration": CalibrationConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in d.items():
            if key in sections:
                section = sections[key]
                value = value or {}
                bad = set(value) - {f.name for f in fields(section)}
                if bad:
                    raise InvalidConfigError(f"unknown keys in {key}: {sorted(bad)}")
                try:
                    kwargs[key] = section(**value)
                except (TypeError, ValueError) as exc:
                    raise InvalidConfigError(f"{key}: {exc}") from exc
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InvalidConfigError(f"malformed config: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise InvalidConfigError("config must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_yaml(Path(path).read_text())

"""Run configuration: one YAML file, validated before any work starts.

Environment variables SAFECREDIT_SEED and SAFECREDIT_OUTDIR override the
seed list and output directory without touching the file.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from safecredit.envs.base import EnvConfig
from safecredit.errors import ConfigError
from safecredit.rl.trainer import MODES, TrainerConfig


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    head: str = "distributional"
    decoder_hidden: int = 64
    decoder_input: str = "concat"


@dataclass
class PretrainConfig:
    n_segments: int = 2000
    epochs: int = 50
    target_accuracy: float = 0.95
    batch_size: int = 32
    lr: float = 3e-3
    slice_fraction: float = 0.5
    min_segment_len: int = 10
    dataset_seed: int = 9181


@dataclass
class ContinualConfig:
    label_every_episodes: int = 50
    select_fraction: float = 0.2
    strategy: str = "cv"           # cv | all
    retrain_epochs: int = 4
    retrain_lr: float = 1e-3       # gentler than pretraining
    rehearsal_fraction: float = 0.5
    accuracy_floor: float = 0.95   # re-checked after retraining; warn only


@dataclass
class RunConfig:
    mode: str = "ssv"
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    continual: ContinualConfig = field(default_factory=ContinualConfig)
    labeling_source: str = "oracle"  # oracle | human
    service_port: int = 0            # 0 picks a free port (human mode)
    total_steps: int = 250_000
    eval_episodes: int = 100
    eval_seed_base: int = 510_000
    checkpoint_every: int = 10
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = ""

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.out_dir:
            raise ConfigError("out_dir is required")
        if not (0.0 < self.trainer.d <= 1.0):
            raise ConfigError("d must lie in (0, 1]")
        if self.labeling_source not in ("oracle", "human"):
            raise ConfigError("labeling_source must be 'oracle' or 'human'")
        if self.continual.strategy not in ("cv", "all"):
            raise ConfigError("continual.strategy must be 'cv' or 'all'")
        if (self.mode == "ssv" and self.continual.strategy == "cv"
                and self.model.head != "distributional"):
            raise ConfigError("cv selection needs the distributional head")
        if self.trainer.mode != self.mode:
            self.trainer.mode = self.mode
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {
    "env": EnvConfig,
    "model": ModelConfig,
    "trainer": TrainerConfig,
    "pretrain": PretrainConfig,
    "continual": ContinualConfig,
}


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw or {})
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if section in raw:
            body = raw.pop(section)
            if not isinstance(body, dict):
                raise ConfigError(f"section '{section}' must be a mapping")
            try:
                kwargs[section] = cls(**body)
            except TypeError as error:
                raise ConfigError(f"bad field in section '{section}': {error}")
    known = set(RunConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config field '{key}'")
    kwargs.update(raw)
    if "trainer" in kwargs and "mode" in raw:
        kwargs["trainer"].mode = raw["mode"]
    elif "trainer" not in kwargs and "mode" in raw:
        kwargs["trainer"] = TrainerConfig(mode=raw["mode"])
    try:
        config = RunConfig(**kwargs)
    except TypeError as error:
        raise ConfigError(str(error))
    _apply_env_overrides(config)
    return config.validate()


def load_run_config(path) -> RunConfig:
    text = Path(path).read_text()
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return config_from_dict(raw)


def _apply_env_overrides(config: RunConfig) -> None:
    seed = os.environ.get("SAFECREDIT_SEED")
    if seed is not None:
        config.seeds = [int(seed)]
    out_dir = os.environ.get("SAFECREDIT_OUTDIR")
    if out_dir is not None:
        config.out_dir = out_dir

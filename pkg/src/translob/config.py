"""Flat JSON run configuration shared by every CLI command.

One document holds the labelling, model, training and split settings. Every
field is optional; the defaults are the reference FI-2010 setup. A single
root ``seed`` drives model initialization, shuffling and dropout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .lob.labels import LabelConfig
from .lob.normalize import STATS_POLICIES
from .model import ConfigError, ModelConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # labelling and windowing
    horizon_k: int = 10
    alpha: float = 0.002
    smoothing: str = "literal"
    stats_policy: str = "previous_day"
    cross_day: bool = False
    window: int = 100
    # model
    conv_filters: int = 14
    kernel_size: int = 2
    dilations: tuple = (1, 2, 4, 8, 16)
    d_model: int = 15
    num_heads: int = 3
    num_blocks: int = 2
    weights_shared: bool = True
    mlp_dim: int = 60
    dense_dim: int = 64
    dropout: float = 0.1
    l2: float = 1e-4
    scale_mode: str = "model_dim"
    # training
    batch_size: int = 32
    epochs: int = 150
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle: bool = True
    eval_every: int = 1
    patience: Optional[int] = None
    # day split
    n_train_days: int = 7
    n_test_days: int = 3
    # paths
    input: Optional[str] = None
    archive: Optional[str] = None
    out_dir: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if self.stats_policy not in STATS_POLICIES:
            raise ConfigError(f"stats_policy must be one of {STATS_POLICIES}")
        if self.n_train_days < 1 or self.n_test_days < 0:
            raise ConfigError("n_train_days must be >= 1 and n_test_days >= 0")
        # building the parts runs their own validation
        self.label_config()
        self.model_config()
        self.train_config()

    def label_config(self) -> LabelConfig:
        try:
            return LabelConfig(self.horizon_k, self.alpha, self.smoothing)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)} - {"n_features", "num_classes", "ln_eps"}
        return ModelConfig(**{n: getattr(self, n) for n in names})

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        try:
            return TrainConfig(**{n: getattr(self, n) for n in names})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def merged(self, overrides: dict) -> "RunConfig":
        """Copy with the non-``None`` entries of ``overrides`` applied."""
        d = self.to_dict()
        d.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(d)


DEFAULTS = RunConfig()

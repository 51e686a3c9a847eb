"""Flat experiment configuration read from ``key = value`` files."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .meta import AdaptConfig, MetaConfig
from .model import ModelConfig

SEED_ENV = "MASTER_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # architecture
    d_model: int = 32
    heads: int = 4
    window: int = 4
    shift: int = 2
    mlp_ratio: int = 2
    fusion: str = "scale_shift"
    # meta training
    max_layers: int = 4
    k: int = 2
    inner_lr: float = 1e-4
    outer_lr: float = 1e-4
    iterations: int = 100
    batch_size: int = 4
    optimizer: str = "sgd"
    style_weight: float = 10.0
    # fast adaptation / inference
    adapt_steps: int = 100
    adapt_lr: float = 1e-4
    adapt_layers: int = 1
    adapt_optimizer: str = "sgd"
    eval_step: int = 10
    layers: int = 1
    # data
    image_size: int = 64
    content_count: int = 64
    style_count: int = 32
    heldout_count: int = 8
    seed: int = 0
    data_seed: int = 0
    loss_seed: int = 7

    def __post_init__(self):
        if self.image_size % 16:
            raise ConfigError(f"image_size {self.image_size} must be a multiple of 16")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0 <= self.shift < self.window:
            raise ConfigError(f"shift {self.shift} must lie in [0, window)")
        for name in ("iterations", "content_count", "style_count", "heldout_count", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.layers < 0 or self.adapt_layers < 0:
            raise ConfigError("layer counts must be >= 0")
        try:
            self.meta()
            self.adapt()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def model(self) -> ModelConfig:
        return ModelConfig(self.d_model, self.heads, self.window, self.shift, self.mlp_ratio, self.fusion)

    def meta(self) -> MetaConfig:
        return MetaConfig(self.inner_lr, self.outer_lr, self.k, self.max_layers, self.iterations,
                          self.batch_size, self.seed, self.style_weight, self.optimizer)

    def adapt(self) -> AdaptConfig:
        return AdaptConfig(self.adapt_steps, self.adapt_lr, self.adapt_layers, self.batch_size, self.seed,
                           self.style_weight, self.adapt_optimizer)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def _coerce(name: str, raw: str, kind):
    try:
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    base = base or ExperimentConfig()
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, types[key])
    return dataclasses.replace(base, **values)


def load_config(path=None, env=None, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """``base`` (defaults if omitted), overlaid by the file at ``path``, overlaid by ``MASTER_SEED``."""
    cfg = base or ExperimentConfig()
    if path is not None:
        cfg = parse_config(Path(path).read_text(encoding="utf-8"), cfg)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        cfg = cfg.replace(seed=_coerce(SEED_ENV, env[SEED_ENV], int))
    return cfg

"""Declarative run configuration: a flat key=value file plus CLI overrides.

Unknown keys are rejected and every value is validated before any stage
runs.  The same RunConfig drives the library entry points directly, so
command behavior matches plain library calls.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

from .attention import AttentionConfig
from .encoder import EncoderConfig
from .training import FilterSettings, TrainConfig


class ConfigError(ValueError):
    pass


def _to_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _optional(converter):
    def convert(text: str):
        if text.strip().lower() in ("none", ""):
            return None
        return converter(text)

    return convert


@dataclass
class RunConfig:
    # filtering
    theta: float = 0.5
    labels: str = "classifier"
    label_policy: str = "median-split"
    label_threshold: Optional[float] = None
    label_quantile: Optional[float] = None
    zero_superseded: bool = False
    missing_interval: str = "exclude"
    scope: str = "train"
    t_current: Optional[int] = None
    # model dimensions
    entity_dim: int = 32
    relation_dim: int = 32
    fact_dim: Optional[int] = None
    heads: int = 2
    leaky_slope: float = 0.2
    margin: float = 1.0
    invert_margin: bool = False
    negatives_per_positive: int = 1
    encoder_dim: int = 16
    encoder_layers: int = 2
    concat_projected: bool = True
    # training
    alpha: float = 0.5
    epochs: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    batch_size: Optional[int] = None
    patience: Optional[int] = None
    schedule: str = "joint"

    def validate(self) -> None:
        if self.scope not in ("train", "all"):
            raise ConfigError(f"scope must be 'train' or 'all', got {self.scope!r}")
        if self.label_policy not in ("median-split", "fixed", "quantile"):
            raise ConfigError(f"unknown label_policy {self.label_policy!r}")
        try:
            self.attention_config().validate()
            self.encoder_config().validate()
            self.train_config().validate()
            self.filter_settings().validate()
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def attention_config(self) -> AttentionConfig:
        return AttentionConfig(
            entity_dim=self.entity_dim,
            relation_dim=self.relation_dim,
            fact_dim=self.fact_dim,
            heads=self.heads,
            leaky_slope=self.leaky_slope,
            margin=self.margin,
            negatives_per_positive=self.negatives_per_positive,
            invert_margin=self.invert_margin,
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            out_dim=self.encoder_dim,
            layers=self.encoder_layers,
            concat_projected=self.concat_projected,
            leaky_slope=self.leaky_slope,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed,
            batch_size=self.batch_size,
            patience=self.patience,
            schedule=self.schedule,
        )

    def filter_settings(self) -> FilterSettings:
        return FilterSettings(
            theta=self.theta,
            labels=self.labels,
            label_policy=self.label_policy,
            label_threshold=self.label_threshold,
            label_quantile=self.label_quantile,
            zero_superseded=self.zero_superseded,
            missing_interval=self.missing_interval,
        )


_CONVERTERS = {
    "theta": float,
    "labels": str,
    "label_policy": str,
    "label_threshold": _optional(float),
    "label_quantile": _optional(float),
    "zero_superseded": _to_bool,
    "missing_interval": str,
    "scope": str,
    "t_current": _optional(int),
    "entity_dim": int,
    "relation_dim": int,
    "fact_dim": _optional(int),
    "heads": int,
    "leaky_slope": float,
    "margin": float,
    "invert_margin": _to_bool,
    "negatives_per_positive": int,
    "encoder_dim": int,
    "encoder_layers": int,
    "concat_projected": _to_bool,
    "alpha": float,
    "epochs": int,
    "learning_rate": float,
    "optimizer": str,
    "seed": int,
    "batch_size": _optional(int),
    "patience": _optional(int),
    "schedule": str,
}

assert set(_CONVERTERS) == {f.name for f in fields(RunConfig)}


def load_config(path) -> RunConfig:
    """Parse a key = value config file; '#' starts a comment line."""
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CONVERTERS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                setattr(cfg, key, _CONVERTERS[key](value.strip()))
            except ConfigError:
                raise
            except ValueError as err:
                raise ConfigError(
                    f"{path}: line {lineno}: bad value for {key!r}: {err}"
                ) from None
    return cfg


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Set non-None overrides on a copy of the config; unknown keys fail."""
    updated = RunConfig(**{f.name: getattr(cfg, f.name) for f in fields(RunConfig)})
    for key, value in overrides.items():
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            setattr(updated, key, value)
    return updated

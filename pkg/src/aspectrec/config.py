"""Run configuration: defaults, ablation variants, and INI-file round trips."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigError

ENCODER_MODES = ("compact", "pretrained")

ABLATION_VARIANTS = (
    "full",
    "wo_kg",
    "wo_aspect_transformer",
    "wo_node_type_loss",
    "wo_source_emb",
    "wo_weight",
    "wo_attention",
    "wo_finetune",
)


@dataclass
class TrainConfig:
    # data
    rating_scale: int = 5
    min_reviews: int = 5
    split_ratios: tuple[int, int, int] = (8, 1, 1)
    per_user_split: bool = False
    exclude_train_target: bool = True
    max_doc_tokens: int = 300
    max_aspects: int = 64
    synonym_threshold: float = 0.8

    # model
    d_model: int = 64
    d_kg: int = 64
    k_fm: int = 10
    rgcn_layers: int = 1
    transformer_layers: int = 4
    transformer_heads: int = 4
    attention_dim: Optional[int] = None
    dropout: float = 0.1
    encoder_mode: str = "compact"
    encoder_layers: int = 2
    encoder_width: int = 64
    encoder_heads: int = 4
    pretrained_name: str = "bert-base-uncased"
    project_pooled: bool = False  # learned map instead of zero-padding
    clip_predictions: bool = False

    # training
    learning_rate: float = 6e-5
    batch_size: int = 12
    max_epochs: int = 50
    patience: int = 5
    alpha: float = 0.2
    node_loss_sample: Optional[int] = None  # None = all nodes each step
    train_mse_stop: Optional[float] = None  # optional capacity-run early exit
    seed: int = 0

    # ablation switches (independent and composable)
    use_kg: bool = True
    use_aspect_transformer: bool = True
    use_source_emb: bool = True
    use_aspect_weight: bool = True
    use_attention: bool = True
    finetune_encoder: bool = True

    def validate(self) -> None:
        positive = (
            "rating_scale", "min_reviews", "max_doc_tokens", "max_aspects",
            "d_model", "d_kg", "k_fm", "rgcn_layers", "transformer_layers",
            "transformer_heads", "encoder_layers", "encoder_width", "encoder_heads",
            "batch_size", "max_epochs", "patience",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.encoder_mode not in ENCODER_MODES:
            raise ConfigError(f"encoder_mode must be one of {ENCODER_MODES}, got {self.encoder_mode!r}")
        if len(self.split_ratios) != 3 or any(r <= 0 for r in self.split_ratios):
            raise ConfigError(f"split_ratios must be three positive integers, got {self.split_ratios}")

    def with_variant(self, variant: str) -> "TrainConfig":
        """Apply a single documented ablation switch; everything else is unchanged."""
        if variant not in ABLATION_VARIANTS:
            raise ConfigError(f"unknown ablation variant {variant!r}; choose from {ABLATION_VARIANTS}")
        cfg = dataclasses.replace(self)
        if variant == "wo_kg":
            cfg.use_kg = False
        elif variant == "wo_aspect_transformer":
            cfg.use_aspect_transformer = False
        elif variant == "wo_node_type_loss":
            cfg.alpha = 0.0
        elif variant == "wo_source_emb":
            cfg.use_source_emb = False
        elif variant == "wo_weight":
            cfg.use_aspect_weight = False
        elif variant == "wo_attention":
            cfg.use_attention = False
        elif variant == "wo_finetune":
            cfg.finetune_encoder = False
        return cfg


_SECTIONS = {
    "data": (
        "rating_scale", "min_reviews", "split_ratios", "per_user_split",
        "exclude_train_target", "max_doc_tokens", "max_aspects", "synonym_threshold",
    ),
    "model": (
        "d_model", "d_kg", "k_fm", "rgcn_layers", "transformer_layers",
        "transformer_heads", "attention_dim", "dropout", "encoder_mode",
        "encoder_layers", "encoder_width", "encoder_heads", "pretrained_name",
        "project_pooled", "clip_predictions",
    ),
    "train": (
        "learning_rate", "batch_size", "max_epochs", "patience", "alpha",
        "node_loss_sample", "train_mse_stop", "seed",
    ),
    "ablation": (
        "use_kg", "use_aspect_transformer", "use_source_emb",
        "use_aspect_weight", "use_attention", "finetune_encoder",
    ),
}

_FIELD_SECTION = {name: section for section, names in _SECTIONS.items() for name in names}


def save_config(config: TrainConfig, path) -> None:
    parser = configparser.ConfigParser()
    for section, names in _SECTIONS.items():
        parser[section] = {}
        for name in names:
            value = getattr(config, name)
            if value is None:
                parser[section][name] = ""
            elif isinstance(value, tuple):
                parser[section][name] = ",".join(str(v) for v in value)
            else:
                parser[section][name] = str(value)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def load_config(path=None, overrides: Optional[dict[str, str]] = None) -> TrainConfig:
    """Build a config from an INI file plus ``section.key=value`` overrides.

    Any key absent from the file keeps its default; unknown keys raise a
    named error.
    """
    config = TrainConfig()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path)
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for name, raw in parser[section].items():
                if name not in _SECTIONS[section]:
                    raise ConfigError(f"unknown config key {section}.{name}")
                _assign(config, name, raw)
    for key, raw in (overrides or {}).items():
        name = key.split(".")[-1]
        if name not in _FIELD_SECTION:
            raise ConfigError(f"unknown config key {key!r}")
        _assign(config, name, raw)
    config.validate()
    return config


def _assign(config: TrainConfig, name: str, raw: str) -> None:
    field_types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    raw = raw.strip()
    declared = field_types[name]
    if raw == "" and "Optional" in str(declared):
        setattr(config, name, None)
        return
    try:
        if name == "split_ratios":
            parts = [int(p) for p in raw.split(",")]
            setattr(config, name, tuple(parts))
        elif declared in ("int", int) or name in ("attention_dim", "node_loss_sample"):
            setattr(config, name, int(raw))
        elif declared in ("float", float) or name == "train_mse_stop":
            setattr(config, name, float(raw))
        elif declared in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                setattr(config, name, True)
            elif raw.lower() in ("0", "false", "no", "off"):
                setattr(config, name, False)
            else:
                raise ValueError(f"not a boolean: {raw!r}")
        else:
            setattr(config, name, raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc

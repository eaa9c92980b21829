"""Dataclass configs with strict dict/file loading.

Unknown keys are rejected rather than ignored so that typos in config
files fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    num_queries: int = 64
    channels: int = 256            # token/query width C'
    encoder_layers: int = 6
    instance_decoder_layers: int = 3
    interaction_decoder_layers: int = 3
    num_heads: int = 8
    embed_dim: int = 512           # provider embedding width D
    word_dim: int = 512            # word embedding width C_k
    num_objects: int = 80
    num_verbs: int = 117
    num_hoi: int = 600
    k_candidates: int = 16
    alpha: float = 0.5             # verb-score weight in the combined hoi score
    r_training_free: int = 10
    lambda_box: float = 2.5
    lambda_iou: float = 1.0
    lambda_class_object: float = 1.0
    lambda_class_interaction: float = 1.0
    lambda_kd: float = 20.0
    nms_iou: float = 0.5
    seed: int = 0
    # architecture knobs the defaults above leave open
    patch_size: int = 8
    image_channels: int = 3
    hidden_scale: int = 4          # FFN width multiplier in transformer blocks
    dropout: float = 0.0
    top_out: int = 100             # triplets kept per image before NMS
    # module toggles (ablation switches)
    use_object_enhancement: bool = True
    use_semantic_enhancement: bool = True
    use_verb_head: bool = True
    use_training_free: bool = True
    # documented alternatives
    interaction_query_mode: str = "mean3"      # mean3 | mean2_plus
    token_selection_score: str = "max_logit"   # max_logit | softmax_max
    attention_weight_shape: str = "vector"     # vector | matrix
    training_free_norm: str = "softmax"        # softmax | minmax
    score_combine: str = "as_printed"          # as_printed | product
    word_embed_init: str = "provider"          # provider | random | provider_frozen
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    interaction_loss: str = "focal"            # focal | bce
    aux_matching: str = "reuse"                # reuse | per_layer
    object_background_weight: float = 0.1      # CE weight of the no-object class

    def __post_init__(self):
        positives = [
            "num_queries", "channels", "encoder_layers", "instance_decoder_layers",
            "interaction_decoder_layers", "num_heads", "embed_dim", "word_dim",
            "num_objects", "num_verbs", "num_hoi", "k_candidates",
            "r_training_free", "patch_size", "image_channels", "top_out",
        ]
        for name in positives:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ["lambda_box", "lambda_iou", "lambda_class_object",
                     "lambda_class_interaction", "lambda_kd", "alpha"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError("nms_iou must lie in (0, 1]")
        if self.k_candidates > self.num_hoi:
            raise ConfigError("k_candidates must not exceed num_hoi")
        if self.r_training_free > self.num_hoi:
            raise ConfigError("r_training_free must not exceed num_hoi")
        if self.channels % 4 != 0:
            raise ConfigError("channels must be divisible by 4 for 2-D sinusoidal positions")
        if self.channels % self.num_heads != 0:
            raise ConfigError("channels must be divisible by num_heads")
        _check_choice(self, "interaction_query_mode", ("mean3", "mean2_plus"))
        _check_choice(self, "token_selection_score", ("max_logit", "softmax_max"))
        _check_choice(self, "attention_weight_shape", ("vector", "matrix"))
        _check_choice(self, "training_free_norm", ("softmax", "minmax"))
        _check_choice(self, "score_combine", ("as_printed", "product"))
        _check_choice(self, "word_embed_init", ("provider", "random", "provider_frozen"))
        _check_choice(self, "interaction_loss", ("focal", "bce"))
        _check_choice(self, "aux_matching", ("reuse", "per_layer"))


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 1e-4
    lr_drop_step: int = 0          # 0 disables the x0.1 drop
    grad_clip: float = 0.1
    eval_every: int = 200
    target_map: float = 0.0        # early-stop threshold; 0 disables
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")


@dataclass
class SyntheticWorldConfig:
    num_images: int = 200
    num_verbs: int = 6
    num_objects: int = 10
    compositions: int = 20
    max_pairs_per_image: int = 2
    image_size: int = 64
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.compositions > self.num_verbs * self.num_objects:
            raise ConfigError("compositions exceed num_verbs * num_objects")
        for name in ["num_images", "num_verbs", "num_objects", "compositions",
                     "max_pairs_per_image", "image_size"]:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class ProviderConfig:
    kind: str = "mock"
    dim: int = 64
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind != "mock":
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


@dataclass
class RunConfig:
    """Top-level config file schema: one section per concern."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    world: SyntheticWorldConfig = field(default_factory=SyntheticWorldConfig)
    provider: ProviderConfig = field(default_factory=ProviderConfig)


_SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "world": SyntheticWorldConfig,
    "provider": ProviderConfig,
}


def _check_choice(cfg, name: str, allowed: tuple[str, ...]) -> None:
    if getattr(cfg, name) not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}")


def dataclass_from_dict(cls, data: dict):
    """Strict construction: every key must be a declared field."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def run_config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = dataclass_from_dict(cls, data[name])
    return RunConfig(**kwargs)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if path.suffix == ".toml":
        import tomllib

        with open(path, "rb") as f:
            data = tomllib.load(f)
    else:
        with open(path) as f:
            data = json.load(f)
    return run_config_from_dict(data)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply "section.key=value" strings on top of a RunConfig."""
    data = dataclasses.asdict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {dotted!r} must be section.key")
        section, key = parts
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if key not in {f.name for f in dataclasses.fields(_SECTIONS[section])}:
            raise ConfigError(f"unknown key {key!r} in section {section!r}")
        data[section][key] = _parse_value(raw)
    return run_config_from_dict(data)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw  # bare string


def save_resolved(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(dataclasses.asdict(cfg), f, indent=2, sort_keys=True)

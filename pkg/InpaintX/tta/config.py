"""TOML run configuration and plain-dict conversion of every config dataclass.

A config file looks like::

    preset = "toy"            # optional: "toy" or "large"

    [model]
    levels = 3
    tta_levels = [true, true, false]

    [attention]
    fallback = "nearest_valid"

    [loss_weights]
    style = 100.0

    [train]
    steps = 2000
"""
import enum
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields
from pathlib import Path

from .attention import AttentionConfig
from .exception import ConfigError
from .losses import LossWeights
from .model import ModelConfig


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    checkpoint_every: int = 500
    log_every: int = 50
    seed: int = 0
    manifest: str | None = None
    families: tuple = ("stripes", "checker")
    mask_min_ratio: float = 0.10
    mask_max_ratio: float = 0.40
    eval_images: int = 16
    prefetch: int = 2

    def __post_init__(self):
        self.families = tuple(self.families)

    def violations(self):
        problems = []
        if self.steps < 1:
            problems.append(f"train.steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            problems.append(f"train.batch_size must be >= 1, got {self.batch_size}")
        for name in ("lr_g", "lr_d"):
            if not getattr(self, name) > 0:
                problems.append(f"train.{name} must be > 0, got {getattr(self, name)}")
        for name in ("beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                problems.append(f"train.{name} must lie in [0, 1), got {getattr(self, name)}")
        if self.checkpoint_every < 1 or self.log_every < 1:
            problems.append("train.checkpoint_every and train.log_every must be >= 1")
        if not 0 < self.mask_min_ratio < self.mask_max_ratio < 1:
            problems.append(
                f"train mask ratios must satisfy 0 < min < max < 1, got {self.mask_min_ratio}, {self.mask_max_ratio}"
            )
        if not self.families:
            problems.append("train.families must not be empty")
        known = {"stripes", "checker", "blobs", "gradient_noise"}
        problems.extend(f"train.families: unknown texture family {f!r}" for f in self.families if f not in known)
        if self.eval_images < 0 or self.prefetch < 0:
            problems.append("train.eval_images and train.prefetch must be >= 0")
        return problems

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)


PRESETS = {
    "toy": lambda: (ModelConfig.toy(), TrainConfig(batch_size=4)),
    "large": lambda: (ModelConfig.large(), TrainConfig(batch_size=16)),
}

SECTIONS = ("model", "attention", "loss_weights", "train")


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def _section(obj, skip=()) -> dict:
    return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}


def to_dict(model_cfg: ModelConfig, train_cfg: TrainConfig) -> dict:
    return {
        "model": _section(model_cfg, skip=("attention", "loss_weights")),
        "attention": _section(model_cfg.attention),
        "loss_weights": _section(model_cfg.loss_weights),
        "train": _section(train_cfg),
    }


def _coerce(section: str, name: str, value, default, problems):
    if isinstance(default, enum.Enum):
        try:
            return type(default)(value)
        except ValueError:
            choices = [member.value for member in type(default)]
            problems.append(f"{section}.{name}: {value!r} is not one of {choices}")
            return default
    if isinstance(default, bool) and not isinstance(value, bool):
        problems.append(f"{section}.{name}: expected true/false, got {value!r}")
        return default
    if isinstance(default, int) and not isinstance(default, bool) and (
        not isinstance(value, int) or isinstance(value, bool)
    ):
        problems.append(f"{section}.{name}: expected an integer, got {value!r}")
        return default
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{section}.{name}: expected a number, got {value!r}")
            return default
        return float(value)
    if isinstance(value, list):
        return tuple(value)
    return value


def _apply(section: str, obj, values: dict, problems):
    if not isinstance(values, dict):
        problems.append(f"[{section}] must be a table")
        return obj
    known = {f.name for f in fields(obj)} - {"attention", "loss_weights"}
    changes = {}
    for name, value in values.items():
        if name not in known:
            problems.append(f"unknown key {section}.{name}")
            continue
        changes[name] = _coerce(section, name, value, getattr(obj, name), problems)
    if not changes:
        return obj
    try:
        return type(obj)(**{**{f.name: getattr(obj, f.name) for f in fields(obj)}, **changes})
    except (TypeError, ValueError) as e:
        problems.append(f"[{section}]: {e}")
        return obj


def from_dict(data: dict, preset: str | None = None):
    """(ModelConfig, TrainConfig) from plain sections over a preset; every problem is reported at once."""
    problems = []
    preset = preset or data.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    model_cfg, train_cfg = PRESETS[preset or "toy"]()
    problems.extend(f"unknown section [{key}]" for key in data if key not in SECTIONS and key != "preset")

    attention = _apply("attention", model_cfg.attention, data.get("attention", {}), problems)
    weights = _apply("loss_weights", model_cfg.loss_weights, data.get("loss_weights", {}), problems)
    model_values = dict(data.get("model", {})) if isinstance(data.get("model", {}), dict) else data["model"]
    if isinstance(model_values, dict) and "levels" in model_values and "tta_levels" not in model_values:
        model_values["tta_levels"] = None
    model_cfg = _apply("model", model_cfg, model_values, problems)
    model_cfg.attention = attention
    model_cfg.loss_weights = weights
    train_cfg = _apply("train", train_cfg, data.get("train", {}), problems)

    if not problems:
        problems.extend(model_cfg.violations())
        problems.extend(train_cfg.violations())
    if problems:
        raise ConfigError(problems)
    return model_cfg, train_cfg


def load_config(path, preset: str | None = None):
    path = Path(path)
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return from_dict(data, preset)

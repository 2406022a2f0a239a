"""Run configuration: dataclasses per section and a strict TOML loader.

Sections: ``[arch]``, ``[train]``, ``[loss]``, ``[lof]``, ``[eval]``,
``[synth]``, ``[data]``.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .errors import ConfigError
from .losses import LossWeights
from .outlier import LOFConfig
from .data import SynthConfig

REGULARIZERS = ("si", "mas", "none")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs_base: int = 30
    epochs_add: int = 10
    epochs_inc: int = 15
    lr_base: float = 1e-3
    lr_add: float = 1e-3
    lr_inc: float = 1e-3
    lr_decay_factor: float = 1.0
    lr_decay_period: int = 0
    regularizer: str = "si"
    use_lof: bool = False
    xi: float = 1e-3
    mas_per_batch: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 for the pairwise cosine loss")
        if min(self.epochs_base, self.epochs_add, self.epochs_inc) < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if not self.xi > 0:
            raise ConfigError("xi must be positive")
        if not 0 < self.lr_decay_factor <= 1 or self.lr_decay_period < 0:
            raise ConfigError("lr_decay_factor must lie in (0, 1] and lr_decay_period be >= 0")

    def lr(self, phase: str, epoch: int) -> float:
        """Learning rate for ``phase`` ("base", "add", "inc") at a 0-based epoch (step decay)."""
        base = {"base": self.lr_base, "add": self.lr_add, "inc": self.lr_inc}[phase]
        if self.lr_decay_period <= 0:
            return base
        return base * self.lr_decay_factor ** (epoch // self.lr_decay_period)


@dataclass(frozen=True)
class ArchConfig:
    # widths after the input layer; empty means [D/4, D/4]
    hidden_dims: tuple = ()

    def encoder_dims(self, input_dim: int) -> list[int]:
        if self.hidden_dims:
            return [input_dim] + [int(h) for h in self.hidden_dims]
        w = max(1, input_dim // 4)
        return [input_dim, w, w]


@dataclass(frozen=True)
class EvalSection:
    # None: measure with an offline joint run
    alpha_ideal: float | None = None


@dataclass(frozen=True)
class DataConfig:
    train_path: str | None = None
    test_path: str | None = None
    base_classes: int | None = None
    classes_per_increment: int = 1
    class_order: str = "ascending"


@dataclass(frozen=True)
class RunConfig:
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    lof: LOFConfig = field(default_factory=LOFConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if (self.data.train_path is None) != (self.data.test_path is None):
            raise ConfigError("data.train_path and data.test_path must be given together")
        if self.data.train_path is None:
            c = self.synth.num_classes
            base = self.data.base_classes if self.data.base_classes is not None else c // 2
            if not 1 <= base < c:
                raise ConfigError(f"base_classes must be between 1 and {c - 1}")
            if (c - base) % self.data.classes_per_increment:
                raise ConfigError("remaining classes do not divide into increments")
        if self.eval.alpha_ideal is not None and not 0 < self.eval.alpha_ideal <= 1:
            raise ConfigError("eval.alpha_ideal must lie in (0, 1]")

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``cfg.replace(train={"seed": 2})``."""
        updates = {name: dataclasses.replace(getattr(self, name), **vals) for name, vals in sections.items()}
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            sec = dataclasses.asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items() if v is not None}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(raw) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, values in raw.items():
            if not isinstance(values, dict):
                raise ConfigError(f"[{name}] must be a table")
            section_cls = sections[name].default_factory
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            vals = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
            try:
                kwargs[name] = section_cls(**vals)
            except TypeError as exc:
                raise ConfigError(f"[{name}]: {exc}") from None
        return cls(**kwargs)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig.from_dict(raw)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())

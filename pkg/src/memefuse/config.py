"""Run configuration and the flat ``key=value`` file format.

Defaults follow the best-tuned Task A settings (BiLSTM row for the text
channel, multilayer CNN row for the image channel, batch 60, 14 epochs,
learning rate 1e-5).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

ALL_MEMBERS = tuple((i, j) for i in (1, 2, 3, 4) for j in (1, 2))


@dataclass
class TextConfig:
    h12: int = 300
    h3: int = 160
    dropout: float = 0.4
    attn: int = 0  # 0 -> h3


@dataclass
class ImageConfig:
    c: int = 6
    m: int = 64
    l: int = 3
    p: float = 0.2
    size: int = 64
    channels: int = 3
    proj: int = 256


@dataclass
class FusionConfig:
    d: int = 128


@dataclass
class TrainConfig:
    batch: int = 60
    epochs: int = 14
    lr: float = 1e-5
    seed: int = 0
    optimizer: str = "adam"
    dev_fraction: float = 0.2
    class_weights: tuple[float, ...] = ()


@dataclass
class ModelConfig:
    classes: int = 3


@dataclass
class EnsembleConfig:
    members: tuple[tuple[int, int], ...] = ALL_MEMBERS
    weights: tuple[float, ...] = ()


@dataclass
class Config:
    text: TextConfig = field(default_factory=TextConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)

    def get(self, key: str):
        group, name = _split_key(key)
        return getattr(getattr(self, group), name)

    def set(self, key: str, value) -> None:
        group, name = _split_key(key)
        sub = getattr(self, group)
        ftype = {f.name: f.type for f in dataclasses.fields(sub)}[name]
        setattr(sub, name, _coerce(key, ftype, value))

    def copy(self) -> "Config":
        return Config(**{f.name: dataclasses.replace(getattr(self, f.name)) for f in dataclasses.fields(self)})

    def items(self) -> list[tuple[str, object]]:
        out = []
        for g in dataclasses.fields(self):
            sub = getattr(self, g.name)
            for f in dataclasses.fields(sub):
                out.append((f"{g.name}.{f.name}", getattr(sub, f.name)))
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.items())

    def validate(self) -> "Config":
        t, im, tr = self.text, self.image, self.train
        if min(t.h12, t.h3) < 1 or t.attn < 0:
            raise ConfigError("text.h12 and text.h3 must be positive")
        if not 0 <= t.dropout < 1 or not 0 <= im.p < 1:
            raise ConfigError("dropout rates must lie in [0, 1)")
        if im.c < 1:
            raise ConfigError(f"image.c must be at least 1, got {im.c}")
        if im.l < 1 or im.l % 2 == 0:
            raise ConfigError(f"image.l must be odd and positive, got {im.l}")
        if min(im.m, im.size, im.proj) < 1 or im.channels not in (1, 3):
            raise ConfigError("image.m, image.size and image.proj must be positive; image.channels is 1 or 3")
        if self.fusion.d < 0:
            raise ConfigError("fusion.d must be >= 0")
        if tr.batch < 1 or tr.epochs < 0 or tr.lr < 0:
            raise ConfigError("train.batch >= 1, train.epochs >= 0 and train.lr >= 0 required")
        if not 0 < tr.dev_fraction < 1:
            raise ConfigError("train.dev_fraction must lie in (0, 1)")
        if tr.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"train.optimizer must be adam or sgd, got {tr.optimizer!r}")
        if self.model.classes < 2:
            raise ConfigError("model.classes must be at least 2")
        if tr.class_weights and (len(tr.class_weights) != self.model.classes or min(tr.class_weights) < 0):
            raise ConfigError("train.class_weights needs one nonnegative weight per class")
        members = self.ensemble.members
        if not members or any(m not in ALL_MEMBERS for m in members) or len(set(members)) != len(members):
            raise ConfigError(f"ensemble.members must be distinct (i:j) pairs with i in 1..4, j in 1..2, got {members}")
        w = self.ensemble.weights
        if w and (len(w) != len(members) or min(w) < 0 or sum(w) == 0):
            raise ConfigError("ensemble.weights needs one nonnegative weight per member, not all zero")
        return self


def _split_key(key: str) -> tuple[str, str]:
    group, _, name = key.partition(".")
    if group in {f.name for f in dataclasses.fields(Config)}:
        sub = {f.name: f for f in dataclasses.fields(Config)}[group].default_factory
        if name in {f.name for f in dataclasses.fields(sub)}:
            return group, name
    raise ConfigError(f"unknown configuration key {key!r}")


def _coerce(key: str, ftype, value):
    if not isinstance(value, str):
        if ftype in ("float", float):
            return float(value)
        if ftype in ("int", int):
            if int(value) != value:
                raise ConfigError(f"{key}: expected an integer, got {value!r}")
            return int(value)
        return value
    text = value.strip()
    try:
        if ftype in ("int", int):
            return int(text)
        if ftype in ("float", float):
            return float(text)
        if ftype in ("str", str):
            return text
        if "tuple[tuple[int, int]" in str(ftype):
            pairs = []
            for item in filter(None, (s.strip() for s in text.split(","))):
                i, j = item.split(":")
                pairs.append((int(i), int(j)))
            return tuple(pairs)
        if "tuple[float" in str(ftype):
            return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from exc
    raise ConfigError(f"{key}: unsupported type {ftype}")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v[0]}:{v[1]}" if isinstance(v, tuple) else repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, base: Config | None = None, source: str = "<config>") -> Config:
    cfg = (base or Config()).copy()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return cfg.validate()


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config().validate()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))

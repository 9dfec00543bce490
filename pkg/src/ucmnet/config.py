"""Flat ``key = value`` run configuration and the shipped presets.

Keys are dotted (``model.stages``, ``loss.variant``, ``train.lr`` ...);
``#`` starts a comment.  Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

from .loss import LossConfig
from .network import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_flat(self) -> dict[str, object]:
        flat = {}
        for section in ("model", "loss", "train"):
            for f in dataclasses.fields(getattr(self, section)):
                flat[f"{section}.{f.name}"] = getattr(getattr(self, section), f.name)
        return flat

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_flat().items())

    @classmethod
    def from_flat(cls, flat: dict[str, object]) -> "RunConfig":
        sections: dict[str, dict] = {"model": {}, "loss": {}, "train": {}}
        for key, value in flat.items():
            section, _, name = key.partition(".")
            sections[section][name] = value
        try:
            return cls(
                ModelConfig(**sections["model"]),
                LossConfig(**sections["loss"]),
                TrainConfig(**sections["train"]),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None


def _field_types() -> dict[str, type]:
    types = {}
    for section, klass in (("model", ModelConfig), ("loss", LossConfig), ("train", TrainConfig)):
        for f in dataclasses.fields(klass):
            default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
            types[f"{section}.{f.name}"] = type(default)
    return types


KEYS = _field_types()


def _convert(key: str, raw: str):
    kind = KEYS[key]
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, object]:
    values = {}
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    return values


def apply_overrides(base: RunConfig, overrides: dict[str, object]) -> RunConfig:
    flat = base.to_flat()
    for key in overrides:
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
    flat.update(overrides)
    return RunConfig.from_flat(flat)


def parse_override(text: str) -> dict[str, object]:
    """``key=value`` from a ``--set`` flag."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    if key not in KEYS:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return {key: _convert(key, raw)}
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


PRESET_NAMES = ("tiny", "desk", "paper-scale")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    return resources.files("ucmnet.configs").joinpath(f"{name}.cfg").read_text(encoding="utf-8")


def load_config(path_or_preset: str | os.PathLike | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a config file (or a preset name) on top of the defaults, then
    apply ``key=value`` overrides."""
    values: dict[str, object] = {}
    if path_or_preset is not None:
        name = os.fspath(path_or_preset)
        if name in PRESET_NAMES:
            values = parse_lines(preset_text(name).splitlines(), source=f"preset:{name}")
        else:
            try:
                with open(name, encoding="utf-8") as fh:
                    values = parse_lines(fh, source=name)
            except OSError as e:
                raise ConfigError(f"cannot read config {name}: {e.strerror}") from None
    for item in overrides:
        values.update(parse_override(item))
    return apply_overrides(RunConfig(), values)

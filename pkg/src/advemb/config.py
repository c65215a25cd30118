"""INI run configuration with strict key checking.

Each CLI command reads the sections it cares about; every key must match
a field of the section's dataclass.  Flag overrides (``--set
section.key=value``) are applied after the file, so flags win.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass

from .errors import ConfigError
from .synth import SynthConfig
from .training import TrainConfig


@dataclass
class GradcheckConfig:
    """Dimensions of the toy instance used by the gradcheck command."""

    n_actions: int = 3
    n_adverb_pairs: int = 1
    feat_dim: int = 6
    window: int = 4
    embed_dim: int = 8
    head_dim: int = 4
    n_heads: int = 2
    attn_hidden: int = 5
    eps: float = 1e-5
    tolerance: float = 1e-4
    seed: int = 7


@dataclass
class EvalConfig:
    setting: str = "all"
    direction: str = "v2a"
    split: str = "test"
    modality: str = "both"
    per_adverb: bool = False


SECTIONS: dict[str, type] = {
    "train": TrainConfig,
    "synth": SynthConfig,
    "gradcheck": GradcheckConfig,
    "eval": EvalConfig,
}


def _coerce(value: str, ftype) -> object:
    origin = typing.get_origin(ftype)
    if origin is tuple:
        args = typing.get_args(ftype)
        parts = value.replace(",", " ").split()
        if len(parts) != len(args):
            raise ConfigError(f"expected {len(args)} values, got {value!r}")
        return tuple(_coerce(p, t) for p, t in zip(parts, args))
    if ftype is bool:
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if ftype is int:
        return int(value)
    if ftype is float:
        return float(value)
    return value


def build_section(cls, raw: dict[str, str]):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} for section [{_section_of(cls)}]; "
                              f"known: {', '.join(sorted(fields))}")
        ftype = typing.get_type_hints(cls)[key]
        try:
            kwargs[key] = _coerce(value, ftype)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return cls(**kwargs)


def _section_of(cls) -> str:
    for name, c in SECTIONS.items():
        if c is cls:
            return name
    return cls.__name__


def read_config_file(path) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections: {', '.join(sorted(unknown))}")
    return {s: dict(cp.items(s)) for s in cp.sections()}


def apply_overrides(raw: dict[str, dict[str, str]], overrides: list[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {item!r}")
        raw.setdefault(section, {})[key.strip()] = value.strip()


def resolve(path, overrides: list[str] | None = None) -> dict[str, object]:
    """File + overrides -> instantiated section objects (defaults where absent)."""
    raw = read_config_file(path) if path else {}
    apply_overrides(raw, overrides or [])
    return {name: build_section(cls, raw.get(name, {}))
            for name, cls in SECTIONS.items()}


def describe(obj) -> str:
    """Compact deterministic key=value rendering of a config object."""
    pairs = []
    for f in dataclasses.fields(obj):
        pairs.append(f"{f.name}={getattr(obj, f.name)}")
    return " ".join(pairs)

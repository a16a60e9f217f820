"""Line-oriented ``key = value`` run configuration."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable

from .char_encoding import ORDERS, CWConfig
from .errors import ConfigError
from .trainer import LOSS_REDUCTIONS, PRESETS, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    vocab_size: int = 10_000


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {text!r}")
        return text

    return parse


# key -> (target, field, parser)
KEYS = {
    "preset": ("train", "preset", _choice(tuple(PRESETS))),
    "hidden": ("train", "hidden", int),
    "layers": ("train", "layers", int),
    "batch_size": ("train", "batch_size", int),
    "unroll": ("train", "unroll", int),
    "keep_prob": ("train", "keep_prob", float),
    "init_range": ("train", "init_range", float),
    "flat_epochs": ("train", "flat_epochs", int),
    "decay": ("train", "decay", float),
    "total_epochs": ("train", "total_epochs", int),
    "clip": ("train", "clip", float),
    "seed": ("train", "seed", int),
    "loss_reduction": ("train", "loss_reduction", _choice(LOSS_REDUCTIONS)),
    "n_chars": ("cw", "n", int),
    "char_emb": ("cw", "char_emb_size", int),
    "char_order": ("cw", "order", _choice(ORDERS)),
    "shared_weights": ("cw", "shared_weights", _bool),
    "use_oov_surfaces": ("cw", "use_oov_surfaces", _bool),
    "random_control": ("cw", "random_control", _bool),
    "train": ("data", "train", str),
    "valid": ("data", "valid", str),
    "test": ("data", "test", str),
    "vocab_size": ("data", "vocab_size", int),
}


def read_entries(text: str) -> list[tuple[int, str, str]]:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        entries.append((lineno, key.strip(), value.strip()))
    return entries


def parse_override(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    return key.strip(), value.strip()


def parse_config(text: str = "", overrides: Iterable[str] = ()) -> tuple[TrainConfig, CWConfig, DataConfig]:
    """Resolve a config file plus ``key=value`` overrides.

    The preset (the last one given anywhere) expands first; every other key
    then applies in file order followed by override order.
    """
    entries = read_entries(text)
    entries += [(None, *parse_override(o)) for o in overrides]
    values = {"train": {}, "cw": {}, "data": {}}
    where: dict[str, int | None] = {}
    preset = "small"
    for lineno, key, raw in entries:
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        target, name, parse = KEYS[key]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key} = {raw!r}: {exc}", lineno) from None
        if key == "preset":
            preset = value
        else:
            values[target][name] = value
        where.pop(key, None)
        where[key] = lineno

    try:
        train = TrainConfig.from_preset(preset, **values["train"])
    except ConfigError as exc:
        raise ConfigError(str(exc), where.get("preset")) from None
    try:
        cw = CWConfig(**values["cw"])
    except ValueError as exc:
        raise ConfigError(str(exc), where.get("n_chars", where.get("char_order"))) from None
    if cw.n and cw.char_width >= train.hidden:
        # blame whichever involved key was applied last; the preset always applies first
        involved = [k for k in where if k in ("n_chars", "char_emb", "hidden")] or [k for k in where if k == "preset"]
        raise ConfigError(
            f"n_chars * char_emb = {cw.n} * {cw.char_emb_size} = {cw.char_width} "
            f">= embedding size {train.hidden}",
            where[involved[-1]] if involved else None,
        )
    return train, cw, DataConfig(**values["data"])


def resolved_text(train: TrainConfig, cw: CWConfig, data: DataConfig) -> str:
    """Config file text that reproduces exactly these settings."""
    by_field = {(t, f): k for k, (t, f, _) in KEYS.items()}
    lines = []
    for target, obj in (("train", train), ("cw", cw), ("data", data)):
        for fl in fields(obj):
            value = getattr(obj, fl.name)
            if value is None:
                continue
            lines.append(f"{by_field[(target, fl.name)]} = {value}")
    return "\n".join(lines) + "\n"

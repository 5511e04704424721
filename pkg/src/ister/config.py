"""Run configuration: a small key = value file format with a schema version.

One line per setting, ``#`` comments, dotted key namespaces. Example:

    schema_version = 1
    out_dir = runs/demo
    seed = 0
    variant = full
    data.synth.total = 2000
    data.synth.channels = 3
    data.synth.periods = 24,12
    data.synth.amplitudes = 1.0,0.5
    data.synth.noise_sd = 0.1
    model.T = 96
    model.S = 24
    model.k = 2
    model.D = 64
    train.learning_rate = 1e-4
    train.max_epochs = 10

Unknown keys, duplicates, type errors, and missing requirements all fail
before anything runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .model import VARIANTS

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SynthSpec:
    """Inline synthetic-dataset request, mirroring the generator arguments."""

    total: int
    channels: int
    periods: tuple[float, ...]
    amplitudes: tuple[float, ...]
    noise_sd: float = 0.0
    trend_slope: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs, resolved and validated."""

    out_dir: str
    seed: int = 0
    variant: str = "full"
    csv_path: str | None = None
    timestamp_column: str | None = None
    has_header: bool = True
    zscore: bool = True
    split_fractions: tuple[float, float, float] | None = None
    split_counts: tuple[int, int, int] | None = None
    synth: SynthSpec | None = None
    model_fields: dict = field(default_factory=dict)
    train_fields: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.csv_path is None) == (self.synth is None):
            raise ConfigError("config needs exactly one data source: data.csv or data.synth.*")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.split_fractions is not None and self.split_counts is not None:
            raise ConfigError("give data.split or data.split_counts, not both")
        for required in ("T", "S"):
            if required not in self.model_fields:
                raise ConfigError(f"config is missing required key model.{required}")


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key} expects a boolean, got {raw!r}")


def _parse_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {raw!r}") from None


def _parse_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {raw!r}") from None


def _parse_list(raw: str, key: str, conv) -> tuple:
    items = [part.strip() for part in raw.split(",") if part.strip()]
    if not items:
        raise ConfigError(f"{key} expects a comma-separated list, got {raw!r}")
    return tuple(conv(item, key) for item in items)


# key -> parser; every accepted key is listed here
_KEY_PARSERS = {
    "schema_version": _parse_int,
    "out_dir": lambda raw, key: raw,
    "seed": _parse_int,
    "variant": lambda raw, key: raw,
    "data.csv": lambda raw, key: raw,
    "data.timestamp_column": lambda raw, key: raw,
    "data.has_header": _parse_bool,
    "data.zscore": _parse_bool,
    "data.split": lambda raw, key: _parse_list(raw, key, _parse_float),
    "data.split_counts": lambda raw, key: _parse_list(raw, key, _parse_int),
    "data.synth.total": _parse_int,
    "data.synth.channels": _parse_int,
    "data.synth.periods": lambda raw, key: _parse_list(raw, key, _parse_float),
    "data.synth.amplitudes": lambda raw, key: _parse_list(raw, key, _parse_float),
    "data.synth.noise_sd": _parse_float,
    "data.synth.trend_slope": _parse_float,
    "data.synth.seed": _parse_int,
    "model.T": _parse_int,
    "model.S": _parse_int,
    "model.N": _parse_int,
    "model.D": _parse_int,
    "model.k": _parse_int,
    "model.blocks": _parse_int,
    "model.h_attention": lambda raw, key: raw,
    "model.c_attention": lambda raw, key: raw,
    "model.ffn_multiple": _parse_int,
    "model.dropout": _parse_float,
    "model.decomp_kernel": _parse_int,
    "model.heads": _parse_int,
    "train.learning_rate": _parse_float,
    "train.batch_size": _parse_int,
    "train.max_epochs": _parse_int,
    "train.patience": _parse_int,
    "train.lr_schedule": lambda raw, key: raw,
}

_SYNTH_REQUIRED = ("total", "channels", "periods", "amplitudes")


def parse_run_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate config text; raises ConfigError naming the fault."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _KEY_PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not raw_value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        values[key] = _KEY_PARSERS[key](raw_value, key)

    if values.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"{source}: schema_version must be {SCHEMA_VERSION}, got {values.get('schema_version')!r}"
        )
    if "out_dir" not in values:
        raise ConfigError(f"{source}: missing required key 'out_dir'")

    for key in ("data.split", "data.split_counts"):
        if key in values and len(values[key]) != 3:
            raise ConfigError(f"{key} expects exactly 3 entries, got {len(values[key])}")

    synth_keys = {k: v for k, v in values.items() if k.startswith("data.synth.")}
    synth = None
    if synth_keys:
        missing = [k for k in _SYNTH_REQUIRED if f"data.synth.{k}" not in synth_keys]
        if missing:
            raise ConfigError(f"{source}: data.synth.* is missing {missing}")
        synth = SynthSpec(
            total=values["data.synth.total"],
            channels=values["data.synth.channels"],
            periods=values["data.synth.periods"],
            amplitudes=values["data.synth.amplitudes"],
            noise_sd=values.get("data.synth.noise_sd", 0.0),
            trend_slope=values.get("data.synth.trend_slope", 0.0),
            seed=values.get("data.synth.seed", 0),
        )

    model_fields = {
        key.split(".", 1)[1]: v for key, v in values.items() if key.startswith("model.")
    }
    train_fields = {
        key.split(".", 1)[1]: v for key, v in values.items() if key.startswith("train.")
    }
    return RunConfig(
        out_dir=values["out_dir"],
        seed=values.get("seed", 0),
        variant=values.get("variant", "full"),
        csv_path=values.get("data.csv"),
        timestamp_column=values.get("data.timestamp_column"),
        has_header=values.get("data.has_header", True),
        zscore=values.get("data.zscore", True),
        split_fractions=values.get("data.split"),
        split_counts=values.get("data.split_counts"),
        synth=synth,
        model_fields=model_fields,
        train_fields=train_fields,
    )


def parse_run_config(path: str) -> RunConfig:
    """Load a config file; missing files and referenced paths fail here."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    config = parse_run_config_text(text, source=path)
    if config.csv_path is not None and not os.path.exists(config.csv_path):
        raise ConfigError(f"data.csv path does not exist: {config.csv_path}")
    return config

"""Flat key=value configuration shared by all CLI subcommands.

The format is plain text: one ``key = value`` per line, ``#`` comments.
Keys are namespaced per subsystem; unknown keys are rejected and values
are type-checked at load time.  Defaults follow the shipped sampling
recipe (sigma 0.002..80, rho 7, churn 1) wherever one exists; training
and synthesis defaults are desk-scale choices.
"""

from __future__ import annotations

import math
import os

__all__ = ["ConfigError", "DEFAULTS", "parse_value", "parse_config_text",
           "load_config", "effective_config_text", "resolve"]

ENV_VAR = "HDD_CONFIG"


class ConfigError(ValueError):
    """Malformed configuration input (unknown key, bad type, bad syntax)."""


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not a valid config value")
    return v


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
DEFAULTS = {
    "seed": (int, 0),
    "noise.sigma_min": (_float, 0.002),
    "noise.sigma_max": (_float, 80.0),
    "noise.rho": (_float, 7.0),
    "noise.steps": (int, 50),
    "shapes.kind": (str, "equal"),  # equal | unit | tandem | identity
    "shapes.k": (int, 1),
    "sampler.s_churn": (_float, 1.0),
    "sampler.s_min": (_float, 0.0),
    "sampler.s_max": (_float, math.inf),
    "sampler.s_noise": (_float, 1.0),
    "sampler.mode": (str, "edm"),  # edm | ddpm
    "train.epochs": (int, 16),
    "train.batch_size": (int, 8),
    "train.learning_rate": (_float, 2e-3),
    "train.sigma_data": (_float, 0.5),
    "train.sigma_min": (_float, 0.05),
    "train.sigma_max": (_float, 80.0),
    "train.rho": (_float, 7.0),
    "train.steps": (int, 50),
    "train.width": (int, 32),
    "synth.beta": (_float, 2.4),
    "synth.height": (int, 64),
    "synth.width": (int, 64),
    "synth.channels": (int, 1),
    "synth.pairs": (int, 256),
    "synth.factor": (int, 4),
    "synth.mean": (_float, 0.0),
    "synth.std": (_float, 1.0),
    "eval.data_range": (_float, 0.0),  # 0 = derive from the observed field
    "rapsd.bins_per_decade": (int, 12),
    "rapsd.channel": (int, 0),
    "klcheck.instances": (int, 1000),
    "klcheck.max_support": (int, 64),
    "footprint.pue": (_float, 1.3),
    "footprint.gamma": (_float, 0.73),
    "footprint.overhead": (_float, 0.0),
}


def parse_value(key: str, text: str):
    try:
        parser, _ = DEFAULTS[key]
    except KeyError:
        raise ConfigError(f"unknown config key: {key}") from None
    try:
        return parser(text.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a validated partial config."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve the effective configuration.

    Precedence: built-in defaults, then the file at ``path`` (or the
    HDD_CONFIG environment variable), then explicit overrides.
    """
    cfg = {key: default for key, (_, default) in DEFAULTS.items()}
    path = path or os.environ.get(ENV_VAR)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        cfg[key] = value
    return cfg


def effective_config_text(cfg: dict) -> str:
    """Dump a fully resolved configuration in file format, sorted by key."""
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, float) and math.isinf(value):
            value = "inf"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def resolve(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"unknown config key: {key}")
    return cfg[key]
